use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Grid, Spectral};
use crate::error::{Error, Result};
use crate::scalar::{cis, Complex, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction<T: Real> {
    grid: Grid<T>,
    amplitudes: DVector<Complex<T>>,
}

impl<T: Real> WaveFunction<T> {
    pub fn new(grid: Grid<T>, amplitudes: DVector<Complex<T>>) -> Result<Self> {
        if amplitudes.len() != grid.n_points() {
            return Err(Error::InvalidState(format!(
                "{} amplitudes for a {}-point grid",
                amplitudes.len(),
                grid.n_points()
            )));
        }
        Ok(WaveFunction { grid, amplitudes })
    }

    pub fn from_fn(grid: Grid<T>, f: impl Fn(T) -> Complex<T>) -> Self {
        let amplitudes = DVector::from_iterator(grid.n_points(), grid.positions().into_iter().map(f));
        WaveFunction { grid, amplitudes }
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn amplitudes(&self) -> &DVector<Complex<T>> {
        &self.amplitudes
    }

    #[inline]
    pub fn amplitudes_mut(&mut self) -> &mut DVector<Complex<T>> {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<Complex<T>> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
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

    /// `<self|other>` with the grid measure.
    pub fn inner(&self, other: &WaveFunction<T>) -> Complex<T> {
        let dx = self.grid.spacing();
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .fold(Complex::default(), |acc, (a, b)| acc + a.conj() * b)
            * dx
    }

    pub fn position_density(&self) -> Vec<T> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    fn moment(&self, f: impl Fn(T) -> T) -> T {
        let dx = self.grid.spacing();
        self.amplitudes
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (j, z)| acc + f(self.grid.position(j)) * z.norm_sqr())
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

    /// Momentum-space probabilities `|phi_k|^2` (summing to the norm) in FFT order.
    pub fn momentum_density(&self, spectral: &Spectral<T>) -> Vec<T> {
        let mut buf: Vec<_> = self.amplitudes.iter().copied().collect();
        spectral.forward(&mut buf);
        let dx = self.grid.spacing();
        buf.iter().map(|z| z.norm_sqr() * dx).collect()
    }

    pub fn expectation_p(&self, spectral: &Spectral<T>) -> T {
        let p = self.grid.momenta();
        self.momentum_density(spectral)
            .iter()
            .zip(&p)
            .fold(T::zero(), |acc, (w, p)| acc + *w * *p)
    }

    pub fn expectation_p2(&self, spectral: &Spectral<T>) -> T {
        let p = self.grid.momenta();
        self.momentum_density(spectral)
            .iter()
            .zip(&p)
            .fold(T::zero(), |acc, (w, p)| acc + *w * *p * *p)
    }

    pub fn momentum_spread(&self, spectral: &Spectral<T>) -> T {
        let m = self.expectation_p(spectral);
        (self.expectation_p2(spectral) - m * m).max(T::zero()).sqrt()
    }

    /// `-iħ dψ/dx` evaluated spectrally.
    pub fn apply_momentum(&self, spectral: &Spectral<T>) -> WaveFunction<T> {
        let mult: Vec<_> = self
            .grid
            .momenta()
            .into_iter()
            .map(|p| Complex::new(p, T::zero()))
            .collect();
        let mut buf: Vec<_> = self.amplitudes.iter().copied().collect();
        spectral.apply_fourier_multiplier(&mut buf, &mult, &mut Vec::new());
        WaveFunction {
            grid: self.grid,
            amplitudes: DVector::from_vec(buf),
        }
    }
}

/// Minimum-uncertainty packet centred on the phase-space point `(q, p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentStateSpec<T> {
    pub q: T,
    pub p: T,
    pub sigma: T,
}

impl<T: Real> CoherentStateSpec<T> {
    pub fn new(q: T, p: T, sigma: T) -> Self {
        CoherentStateSpec { q, p, sigma }
    }

    /// Default width `sqrt(ħ / 2 M ω_ref)`, the ground-state width of the
    /// reference oscillator.
    pub fn default_sigma(hbar: T, mass: T, omega_ref: T) -> T {
        (hbar / (T::lit(2.0) * mass * omega_ref)).sqrt()
    }

    pub fn validate(&self, grid: &Grid<T>) -> Result<()> {
        let two = T::lit(2.0);
        let dx = grid.spacing();
        let l = grid.length();
        if !(self.sigma > two * dx) {
            return Err(Error::Unresolvable(format!(
                "sigma = {} must exceed 2 * spacing = {}",
                self.sigma,
                two * dx
            )));
        }
        if !(self.sigma < l / T::lit(8.0)) {
            return Err(Error::Unresolvable(format!(
                "sigma = {} must be below length / 8 = {}",
                self.sigma,
                l / T::lit(8.0)
            )));
        }
        if self.q.abs() + T::lit(4.0) * self.sigma > l / two {
            return Err(Error::Unresolvable(format!(
                "packet at q = {} with sigma = {} is truncated by the grid edge at ±{}",
                self.q,
                self.sigma,
                l / two
            )));
        }
        let sigma_p = grid.hbar() / (two * self.sigma);
        if self.p.abs() + T::lit(4.0) * sigma_p > grid.nyquist_momentum() {
            return Err(Error::Unresolvable(format!(
                "momentum {} ± 4·{} exceeds the grid cutoff {}",
                self.p,
                sigma_p,
                grid.nyquist_momentum()
            )));
        }
        Ok(())
    }
}

/// Unit-norm Gaussian amplitudes without any resolvability checks.
pub fn gaussian_amplitudes<T: Real>(grid: &Grid<T>, q: T, p: T, sigma: T) -> DVector<Complex<T>> {
    let four_s2 = T::lit(4.0) * sigma * sigma;
    let hbar = grid.hbar();
    let mut v = DVector::from_iterator(
        grid.n_points(),
        grid.positions().into_iter().map(|x| {
            let d = x - q;
            cis(p * x / hbar) * (-(d * d) / four_s2).exp()
        }),
    );
    let n2 = v.iter().fold(T::zero(), |a, z| a + z.norm_sqr()) * grid.spacing();
    let s = T::one() / n2.sqrt();
    v.iter_mut().for_each(|z| *z = *z * s);
    v
}

/// Normalized coherent state `exp(-(x-q)^2 / 4σ^2 + i p x / ħ)`.
pub fn coherent_state<T: Real>(spec: &CoherentStateSpec<T>, grid: &Grid<T>) -> Result<WaveFunction<T>> {
    spec.validate(grid)?;
    Ok(WaveFunction {
        grid: *grid,
        amplitudes: gaussian_amplitudes(grid, spec.q, spec.p, spec.sigma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid<f64> {
        Grid::new(256, 20.0, 1.0).unwrap()
    }

    #[test]
    fn coherent_moments() {
        let g = grid();
        let sp = Spectral::for_grid(&g);
        let psi = coherent_state(&CoherentStateSpec::new(1.0, 2.0, 0.5), &g).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((psi.expectation_x() - 1.0).abs() < 1e-6);
        assert!((psi.expectation_p(&sp) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn origin_state_is_even_and_real() {
        let g = grid();
        let sp = Spectral::for_grid(&g);
        let psi = coherent_state(&CoherentStateSpec::new(0.0, 0.0, 0.7), &g).unwrap();
        let a = psi.amplitudes();
        for j in 1..g.n_points() {
            assert!(a[j].im.abs() < 1e-15);
            assert!((a[j] - a[g.n_points() - j]).norm() < 1e-14);
        }
        assert!(psi.expectation_x().abs() < 1e-10);
        assert!(psi.expectation_p(&sp).abs() < 1e-10);
    }

    #[test]
    fn minimum_uncertainty() {
        let g = grid();
        let sp = Spectral::for_grid(&g);
        for &(q, p, s) in &[(0.0, 0.0, 0.3), (2.0, -3.0, 0.8), (-1.0, 5.0, 1.2)] {
            let psi = coherent_state(&CoherentStateSpec::new(q, p, s), &g).unwrap();
            let prod = psi.position_spread() * psi.momentum_spread(&sp);
            assert!((prod - 0.5).abs() < 1e-4, "{prod}");
        }
    }

    #[test]
    fn rejects_unresolvable_widths() {
        let g = grid();
        let dx = g.spacing();
        assert!(coherent_state(&CoherentStateSpec::new(0.0, 0.0, 1.5 * dx), &g).is_err());
        assert!(coherent_state(&CoherentStateSpec::new(0.0, 0.0, 20.0 / 7.0), &g).is_err());
        assert!(coherent_state(&CoherentStateSpec::new(9.0, 0.0, 0.5), &g).is_err());
        assert!(coherent_state(&CoherentStateSpec::new(0.0, 40.0, 0.5), &g).is_err());
    }
}
