use nalgebra::DMatrix;

use super::{Grid, Spectral, WaveFunction};
use crate::error::{Error, Result};
use crate::scalar::{Complex, Real};

/// Position-basis density matrix `rho_jk = <x_j|rho|x_k>`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    grid: Grid<T>,
    elements: DMatrix<Complex<T>>,
}

pub(crate) fn adjoint<T: Real>(m: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    m.transpose().map(|z| z.conj())
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(grid: Grid<T>, elements: DMatrix<Complex<T>>) -> Result<Self> {
        let n = grid.n_points();
        if elements.nrows() != n || elements.ncols() != n {
            return Err(Error::InvalidState(format!(
                "{}x{} matrix for a {n}-point grid",
                elements.nrows(),
                elements.ncols()
            )));
        }
        Ok(DensityMatrix { grid, elements })
    }

    pub fn from_pure(psi: &WaveFunction<T>) -> Self {
        let a = psi.amplitudes();
        let n = a.len();
        let elements = DMatrix::from_fn(n, n, |j, k| a[j] * a[k].conj());
        DensityMatrix {
            grid: *psi.grid(),
            elements,
        }
    }

    /// Convex combination `sum_i w_i |psi_i><psi_i|`.
    pub fn mixture(weights: &[T], states: &[WaveFunction<T>]) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::InvalidState("empty mixture".into()))?;
        let mut out = DensityMatrix {
            grid: *first.grid(),
            elements: DMatrix::zeros(first.grid().n_points(), first.grid().n_points()),
        };
        for (w, s) in weights.iter().zip(states) {
            first.grid().same_as(s.grid())?;
            out.elements += DensityMatrix::from_pure(s).elements * Complex::new(*w, T::zero());
        }
        Ok(out)
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn elements(&self) -> &DMatrix<Complex<T>> {
        &self.elements
    }

    #[inline]
    pub fn elements_mut(&mut self) -> &mut DMatrix<Complex<T>> {
        &mut self.elements
    }

    pub fn into_elements(self) -> DMatrix<Complex<T>> {
        self.elements
    }

    pub fn trace(&self) -> T {
        self.elements
            .diagonal()
            .iter()
            .fold(T::zero(), |a, z| a + z.re)
            * self.grid.spacing()
    }

    pub fn scaled(mut self, factor: T) -> Self {
        let f = Complex::new(factor, T::zero());
        self.elements.iter_mut().for_each(|z| *z = *z * f);
        self
    }

    pub fn normalized(self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > T::zero()) {
            return Err(Error::InvalidState(format!("cannot normalize trace {tr}")));
        }
        Ok(self.scaled(T::one() / tr))
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> T {
        let dx = self.grid.spacing();
        self.elements
            .iter()
            .fold(T::zero(), |a, z| a + z.norm_sqr())
            * dx
            * dx
    }

    /// Largest `|rho_jk - conj(rho_kj)|` in the discrete (trace-one) normalization.
    pub fn hermiticity_error(&self) -> T {
        let n = self.grid.n_points();
        let mut worst = T::zero();
        for j in 0..n {
            for k in j..n {
                let d = (self.elements[(j, k)] - self.elements[(k, j)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst * self.grid.spacing()
    }

    pub fn position_density(&self) -> Vec<T> {
        self.elements.diagonal().iter().map(|z| z.re).collect()
    }

    fn moment(&self, f: impl Fn(T) -> T) -> T {
        let dx = self.grid.spacing();
        self.elements
            .diagonal()
            .iter()
            .enumerate()
            .fold(T::zero(), |a, (j, z)| a + f(self.grid.position(j)) * z.re)
            * dx
    }

    pub fn expectation_x(&self) -> T {
        self.moment(|x| x)
    }

    pub fn expectation_x2(&self) -> T {
        self.moment(|x| x * x)
    }

    pub fn position_spread(&self) -> T {
        let m = self.expectation_x();
        (self.expectation_x2() - m * m).max(T::zero()).sqrt()
    }

    /// Diagonal of `F rho F^dagger` times `dx`: momentum probabilities in FFT order.
    pub fn momentum_density(&self, spectral: &Spectral<T>) -> Vec<T> {
        let n = self.grid.n_points();
        let mut a = self.elements.clone();
        for mut col in a.column_iter_mut() {
            spectral.forward(col.as_mut_slice());
        }
        let mut b = adjoint(&a);
        for mut col in b.column_iter_mut() {
            spectral.forward(col.as_mut_slice());
        }
        let dx = self.grid.spacing();
        (0..n).map(|k| b[(k, k)].re * dx).collect()
    }

    pub fn expectation_p(&self, spectral: &Spectral<T>) -> T {
        self.momentum_density(spectral)
            .iter()
            .zip(self.grid.momenta())
            .fold(T::zero(), |a, (w, p)| a + *w * p)
    }

    pub fn expectation_p2(&self, spectral: &Spectral<T>) -> T {
        self.momentum_density(spectral)
            .iter()
            .zip(self.grid.momenta())
            .fold(T::zero(), |a, (w, p)| a + *w * p * p)
    }

    /// `rho -> U rho U^dagger` with `U = F^-1 diag(multiplier) F`.
    pub(crate) fn conjugate_by_fourier_multiplier(
        &mut self,
        spectral: &Spectral<T>,
        multiplier: &[Complex<T>],
        scratch: &mut Vec<Complex<T>>,
    ) {
        spectral.apply_fourier_multiplier(self.elements.as_mut_slice(), multiplier, scratch);
        let mut t = adjoint(&self.elements);
        spectral.apply_fourier_multiplier(t.as_mut_slice(), multiplier, scratch);
        self.elements = adjoint(&t);
    }

    /// Discrete trace-one matrix `rho * dx` as `f64`, Hermitian-symmetrized.
    pub(crate) fn discrete_f64(&self) -> DMatrix<nalgebra::Complex<f64>> {
        let dx = self.grid.spacing().to_f64_lossy();
        let n = self.grid.n_points();
        DMatrix::from_fn(n, n, |j, k| {
            let a = self.elements[(j, k)];
            let b = self.elements[(k, j)].conj();
            nalgebra::Complex::new(
                0.5 * (a.re + b.re).to_f64_lossy() * dx,
                0.5 * (a.im + b.im).to_f64_lossy() * dx,
            )
        })
    }

    /// Eigenvalues of the trace-one matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = self.discrete_f64();
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Clips eigenvalues in `[-tolerance, 0)` to zero and renormalizes.
    ///
    /// Returns whether any clipping happened. Eigenvalues below `-tolerance`
    /// are reported as [`Error::Negativity`].
    pub fn clip_negative(&mut self, tolerance: f64) -> Result<bool> {
        let m = self.discrete_f64();
        let eig = m.symmetric_eigen();
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min >= 0.0 {
            return Ok(false);
        }
        if min < -tolerance {
            return Err(Error::Negativity(min));
        }
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let total: f64 = clipped.iter().sum();
        let v = &eig.eigenvectors;
        let rebuilt = v * DMatrix::from_diagonal(&clipped.map(|l| nalgebra::Complex::new(l / total, 0.0))) * v.adjoint();
        let inv_dx = 1.0 / self.grid.spacing().to_f64_lossy();
        self.elements = DMatrix::from_fn(rebuilt.nrows(), rebuilt.ncols(), |j, k| {
            let z = rebuilt[(j, k)] * inv_dx;
            Complex::new(T::lit(z.re), T::lit(z.im))
        });
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{coherent_state, CoherentStateSpec};

    #[test]
    fn pure_state_has_unit_trace_and_purity() {
        let g = Grid::new(64, 16.0_f64, 1.0).unwrap();
        let psi = coherent_state(&CoherentStateSpec::new(1.0, 0.5, 1.0), &g).unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        assert!(rho.hermiticity_error() < 1e-14);
        assert!(rho.min_eigenvalue() > -1e-12);
        let sp = Spectral::for_grid(&g);
        assert!((rho.expectation_p(&sp) - psi.expectation_p(&sp)).abs() < 1e-12);
    }

    #[test]
    fn clip_negative_repairs_small_negativity() {
        let g = Grid::new(8, 8.0_f64, 1.0).unwrap();
        let mut rho = DensityMatrix::new(g, DMatrix::identity(8, 8) * Complex::new(1.0 / 8.0, 0.0)).unwrap();
        rho.elements_mut()[(0, 0)] -= Complex::new(1.0 / 8.0 + 1e-8, 0.0);
        rho.elements_mut()[(1, 1)] += Complex::new(1.0 / 8.0 + 1e-8, 0.0);
        assert!(rho.min_eigenvalue() < 0.0);
        assert!(rho.clip_negative(1e-6).unwrap());
        assert!(rho.min_eigenvalue() >= -1e-15);
        assert!((rho.trace() - 1.0).abs() < 1e-12);

        rho.elements_mut()[(2, 2)] = Complex::new(-0.01, 0.0);
        assert!(matches!(rho.clip_negative(1e-6), Err(Error::Negativity(_))));
    }
}
