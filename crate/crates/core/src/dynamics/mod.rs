//! Time evolution of the system alone, of the system with a dephasing qubit
//! register, and of the reduced density matrix under position dephasing.

mod closed;
mod master;
mod timescale;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

pub use closed::{evolve_closed, ClosedPropagator};
pub use master::{
    evolve_master, evolve_master_history, police_negativity, write_master_checkpoint,
    MasterHistory, MasterOptions, MasterPropagator, WarningCounters, NOISE_FLOOR,
};
pub use timescale::{decoherence_timescale, fit_decay, fit_dephasing_rate, DecayFit};

/// Largest allowed `dt * energy_scale` (energy scale expressed as a rate).
pub const STABILITY_LIMIT: f64 = 0.1;
/// Fraction of [`STABILITY_LIMIT`] used when choosing a default step.
pub const DEFAULT_STEP_FACTOR: f64 = 0.05;

/// Potential energy forms. Quartic is `a x²/2 + b x⁴/4`, double well is
/// `beta (x² - alpha²)²`, harmonic is `M ω² x²/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential<T> {
    Free,
    Harmonic { omega: T },
    Quartic { a: T, b: T },
    DoubleWell { alpha: T, beta: T },
    /// Samples of `V` at `x_min + j * spacing`, linearly interpolated.
    Table { x_min: T, spacing: T, values: Vec<T> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec<T> {
    pub mass: T,
    pub potential: Potential<T>,
}

impl<T: Real> HamiltonianSpec<T> {
    pub fn new(mass: T, potential: Potential<T>) -> Self {
        HamiltonianSpec { mass, potential }
    }

    pub fn free(mass: T) -> Self {
        Self::new(mass, Potential::Free)
    }

    pub fn harmonic(mass: T, omega: T) -> Self {
        Self::new(mass, Potential::Harmonic { omega })
    }

    pub fn quartic(mass: T, a: T, b: T) -> Self {
        Self::new(mass, Potential::Quartic { a, b })
    }

    /// Tabulates an arbitrary potential on the grid.
    pub fn tabulated(mass: T, grid: &Grid<T>, v: impl Fn(T) -> T) -> Self {
        Self::new(
            mass,
            Potential::Table {
                x_min: grid.position(0),
                spacing: grid.spacing(),
                values: grid.positions().into_iter().map(v).collect(),
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > T::zero()) || !self.mass.is_finite() {
            return Err(Error::InvalidSpec(format!("mass = {} must be > 0", self.mass)));
        }
        match &self.potential {
            Potential::Harmonic { omega } if !(*omega > T::zero()) => {
                Err(Error::InvalidSpec(format!("omega = {omega} must be > 0")))
            }
            Potential::Table { spacing, values, .. } => {
                if values.len() < 2 || !(*spacing > T::zero()) {
                    return Err(Error::InvalidSpec("potential table needs >= 2 samples and spacing > 0".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("potential table contains non-finite values".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn table_index(x_min: T, spacing: T, len: usize, x: T) -> (usize, T) {
        let u = ((x - x_min) / spacing).max(T::zero());
        let i = u.floor().to_usize().unwrap_or(0).min(len - 2);
        (i, u - T::from_usize(i).unwrap())
    }

    pub fn potential(&self, x: T) -> T {
        let half = T::lit(0.5);
        match &self.potential {
            Potential::Free => T::zero(),
            Potential::Harmonic { omega } => half * self.mass * *omega * *omega * x * x,
            Potential::Quartic { a, b } => half * *a * x * x + T::lit(0.25) * *b * x * x * x * x,
            Potential::DoubleWell { alpha, beta } => {
                let d = x * x - *alpha * *alpha;
                *beta * d * d
            }
            Potential::Table {
                x_min,
                spacing,
                values,
            } => {
                let (i, f) = Self::table_index(*x_min, *spacing, values.len(), x);
                values[i] * (T::one() - f) + values[i + 1] * f
            }
        }
    }

    /// `dV/dx`.
    pub fn force_gradient(&self, x: T) -> T {
        match &self.potential {
            Potential::Free => T::zero(),
            Potential::Harmonic { omega } => self.mass * *omega * *omega * x,
            Potential::Quartic { a, b } => *a * x + *b * x * x * x,
            Potential::DoubleWell { alpha, beta } => T::lit(4.0) * *beta * x * (x * x - *alpha * *alpha),
            Potential::Table {
                x_min,
                spacing,
                values,
            } => {
                let (i, _) = Self::table_index(*x_min, *spacing, values.len(), x);
                (values[i + 1] - values[i]) / *spacing
            }
        }
    }

    /// `d²V/dx²`; zero for tables.
    pub fn curvature(&self, x: T) -> T {
        match &self.potential {
            Potential::Free | Potential::Table { .. } => T::zero(),
            Potential::Harmonic { omega } => self.mass * *omega * *omega,
            Potential::Quartic { a, b } => *a + T::lit(3.0) * *b * x * x,
            Potential::DoubleWell { alpha, beta } => {
                T::lit(4.0) * *beta * (T::lit(3.0) * x * x - *alpha * *alpha)
            }
        }
    }

    pub fn energy(&self, q: T, p: T) -> T {
        p * p / (T::lit(2.0) * self.mass) + self.potential(q)
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.potential, Potential::Free | Potential::Harmonic { .. })
    }
}

/// Qubit register with `H_E = sum eps_k sz_k` and `H_I = X ⊗ sum g_k sz_k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec<T> {
    pub couplings: Vec<T>,
    pub self_energies: Vec<T>,
}

impl<T: Real> EnvironmentSpec<T> {
    pub fn none() -> Self {
        EnvironmentSpec {
            couplings: Vec::new(),
            self_energies: Vec::new(),
        }
    }

    pub fn new(couplings: Vec<T>, self_energies: Vec<T>) -> Result<Self> {
        let e = EnvironmentSpec {
            couplings,
            self_energies,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.couplings.len() != self.self_energies.len() {
            return Err(Error::InvalidSpec(format!(
                "{} couplings but {} self energies",
                self.couplings.len(),
                self.self_energies.len()
            )));
        }
        if self.couplings.len() > crate::grid::MAX_ENV_QUBITS {
            return Err(Error::InvalidSpec(format!("{} qubits is too many", self.couplings.len())));
        }
        Ok(())
    }

    pub fn env_qubits(&self) -> usize {
        self.couplings.len()
    }

    /// `sz_k` eigenvalue of qubit `k` in basis state `e`: bit clear is `+1`.
    #[inline]
    fn sign(e: usize, k: usize) -> T {
        if e >> k & 1 == 0 {
            T::one()
        } else {
            -T::one()
        }
    }

    /// Effective force constant `sum_k g_k s_k(e)` multiplying `X` in branch `e`.
    pub fn branch_coupling(&self, e: usize) -> T {
        self.couplings
            .iter()
            .enumerate()
            .fold(T::zero(), |a, (k, g)| a + *g * Self::sign(e, k))
    }

    pub fn branch_energy(&self, e: usize) -> T {
        self.self_energies
            .iter()
            .enumerate()
            .fold(T::zero(), |a, (k, eps)| a + *eps * Self::sign(e, k))
    }

    pub fn coupling_strength(&self) -> T {
        self.couplings.iter().fold(T::zero(), |a, g| a + *g * *g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterEquationSpec<T> {
    pub hamiltonian: HamiltonianSpec<T>,
    pub lambda: T,
}

impl<T: Real> MasterEquationSpec<T> {
    pub fn validate(&self) -> Result<()> {
        self.hamiltonian.validate()?;
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidSpec(format!("lambda = {} must be >= 0", self.lambda)));
        }
        Ok(())
    }
}

/// Rate scales relevant to one split step, all in units of 1/time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyScale<T> {
    pub potential: T,
    pub kinetic: T,
    pub dephasing: T,
}

impl<T: Real> EnergyScale<T> {
    pub fn max(&self) -> T {
        self.potential.max(self.kinetic).max(self.dephasing)
    }

    pub fn default_dt(&self) -> T {
        T::lit(DEFAULT_STEP_FACTOR) / self.max().max(T::epsilon())
    }

    pub fn check(&self, dt: T) -> Result<()> {
        let scale = self.max();
        let product = (dt * scale).to_f64_lossy();
        if !(dt > T::zero()) || product > STABILITY_LIMIT {
            return Err(Error::UnstableStep {
                dt: dt.to_f64_lossy(),
                scale: scale.to_f64_lossy(),
                product,
                limit: STABILITY_LIMIT,
            });
        }
        Ok(())
    }
}

/// Estimates the step-relevant rates from a position density and `<P²>`.
///
/// The potential scale is the variation of `V` (plus the largest register
/// coupling term) across the populated region, measured from its value at
/// the mean position: constant offsets only contribute a global phase.
pub fn energy_scale<T: Real>(
    grid: &Grid<T>,
    density: &[T],
    p2: T,
    ham: &HamiltonianSpec<T>,
    max_coupling: T,
    lambda: T,
) -> EnergyScale<T> {
    let peak = density.iter().copied().fold(T::zero(), T::max);
    let floor = peak * T::lit(1e-10);
    let total = density.iter().copied().fold(T::zero(), |a, b| a + b);
    let mean = density
        .iter()
        .enumerate()
        .fold(T::zero(), |a, (j, w)| a + *w * grid.position(j))
        / total.max(T::min_positive_value());
    let v0 = ham.potential(mean);
    let mut dv = T::zero();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for (j, w) in density.iter().enumerate() {
        if *w > floor {
            let x = grid.position(j);
            dv = dv.max((ham.potential(x) - v0).abs() + max_coupling.abs() * (x - mean).abs());
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    let width = if hi >= lo { hi - lo } else { T::zero() };
    let hbar = grid.hbar();
    EnergyScale {
        potential: dv / hbar,
        kinetic: p2 / (T::lit(2.0) * ham.mass * hbar),
        dephasing: lambda * width * width,
    }
}

pub(crate) fn kinetic_multiplier<T: Real>(
    grid: &Grid<T>,
    mass: T,
    dt: T,
) -> Vec<crate::scalar::Complex<T>> {
    let hbar = grid.hbar();
    grid.wavenumbers()
        .into_iter()
        .map(|k| crate::scalar::cis(-hbar * k * k * dt / (T::lit(2.0) * mass)))
        .collect()
}
