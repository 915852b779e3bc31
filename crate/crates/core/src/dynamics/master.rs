use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{energy_scale, kinetic_multiplier, EnergyScale, MasterEquationSpec};
use crate::error::{Error, Result};
use crate::grid::{write_amplitudes, DensityMatrix, Grid, Spectral};
use crate::scalar::{Complex, Real};

/// Eigenvalues above `-NOISE_FLOOR` are treated as round-off and left alone.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterOptions {
    /// Run the eigenvalue positivity check every this many steps; `None`
    /// checks only the final state.
    pub check_every: Option<usize>,
    /// Negative eigenvalues down to `-clip_tolerance` are clipped; anything
    /// deeper aborts with [`Error::Negativity`].
    pub clip_tolerance: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions {
            check_every: None,
            clip_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WarningCounters {
    pub negativity_clips: u64,
    /// Most negative eigenvalue that was clipped.
    pub worst_clipped: f64,
    pub positivity_checks: u64,
}

impl WarningCounters {
    pub fn merge(&mut self, other: &WarningCounters) {
        self.negativity_clips += other.negativity_clips;
        self.worst_clipped = self.worst_clipped.min(other.worst_clipped);
        self.positivity_checks += other.positivity_checks;
    }
}

/// Strang-split step for `dρ/dt = -(i/ħ)[H, ρ] - Λ[X, [X, ρ]]`.
///
/// The potential and double-commutator factors are both elementwise in the
/// position representation: `ρ_jk *= exp(-i(V_j - V_k) dt/2ħ - Λ(x_j - x_k)² dt/2)`
/// for each half step. The kinetic factor is `U ρ U†` with `U` diagonal in
/// momentum.
pub struct MasterPropagator<T: Real> {
    grid: Grid<T>,
    dt: T,
    spectral: Spectral<T>,
    kinetic: Vec<Complex<T>>,
    half: DMatrix<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> MasterPropagator<T> {
    pub fn new(grid: &Grid<T>, spec: &MasterEquationSpec<T>, dt: T) -> Result<Self> {
        spec.validate()?;
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidSpec(format!("dt = {dt} must be > 0")));
        }
        let x = grid.positions();
        let v: Vec<T> = x.iter().map(|&x| spec.hamiltonian.potential(x)).collect();
        let h = T::lit(0.5) * dt;
        let hbar = grid.hbar();
        let n = grid.n_points();
        let half = DMatrix::from_fn(n, n, |j, k| {
            let d = x[j] - x[k];
            let phase = -(v[j] - v[k]) * h / hbar;
            Complex::from_polar((-spec.lambda * d * d * h).exp(), phase)
        });
        Ok(MasterPropagator {
            grid: *grid,
            dt,
            spectral: Spectral::for_grid(grid),
            kinetic: kinetic_multiplier(grid, spec.hamiltonian.mass, dt),
            half,
            scratch: Vec::new(),
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    fn apply_half(&self, rho: &mut DensityMatrix<T>) {
        rho.elements_mut()
            .iter_mut()
            .zip(self.half.iter())
            .for_each(|(z, f)| *z = *z * *f);
    }

    /// Advances `rho` by `steps` steps, policing positivity per `options`.
    pub fn advance(
        &mut self,
        rho: &mut DensityMatrix<T>,
        steps: usize,
        options: &MasterOptions,
        warnings: &mut WarningCounters,
    ) -> Result<()> {
        self.grid.same_as(rho.grid())?;
        for s in 1..=steps {
            self.apply_half(rho);
            rho.conjugate_by_fourier_multiplier(&self.spectral, &self.kinetic, &mut self.scratch);
            self.apply_half(rho);
            if options.check_every.is_some_and(|c| c > 0 && s % c == 0) {
                police_negativity(rho, options, warnings)?;
            }
        }
        Ok(())
    }

    pub fn energy_scale(rho: &DensityMatrix<T>, spec: &MasterEquationSpec<T>) -> EnergyScale<T> {
        let spectral = Spectral::for_grid(rho.grid());
        energy_scale(
            rho.grid(),
            &rho.position_density(),
            rho.expectation_p2(&spectral),
            &spec.hamiltonian,
            T::zero(),
            spec.lambda,
        )
    }
}

/// Clips round-off negativity and rejects genuine loss of positivity.
pub fn police_negativity<T: Real>(
    rho: &mut DensityMatrix<T>,
    options: &MasterOptions,
    warnings: &mut WarningCounters,
) -> Result<()> {
    warnings.positivity_checks += 1;
    let min = rho.min_eigenvalue();
    if min >= -NOISE_FLOOR {
        return Ok(());
    }
    rho.clip_negative(options.clip_tolerance)?;
    warnings.negativity_clips += 1;
    warnings.worst_clipped = warnings.worst_clipped.min(min);
    log::warn!("clipped negative eigenvalue {min:e}");
    Ok(())
}

/// Advances `rho` by `steps` Strang steps of size `dt`, checking positivity
/// of the final state.
pub fn evolve_master<T: Real>(
    mut rho: DensityMatrix<T>,
    spec: &MasterEquationSpec<T>,
    dt: T,
    steps: usize,
) -> Result<DensityMatrix<T>> {
    MasterPropagator::energy_scale(&rho, spec).check(dt)?;
    let mut prop = MasterPropagator::new(rho.grid(), spec, dt)?;
    let options = MasterOptions::default();
    let mut warnings = WarningCounters::default();
    prop.advance(&mut rho, steps, &options, &mut warnings)?;
    police_negativity(&mut rho, &options, &mut warnings)?;
    Ok(rho)
}

/// Snapshots of a master-equation run taken every `record_every` steps,
/// starting with the initial state.
#[derive(Clone, Debug)]
pub struct MasterHistory<T: Real> {
    pub grid: Grid<T>,
    pub times: Vec<T>,
    pub mean_x: Vec<T>,
    pub mean_p: Vec<T>,
    pub purity: Vec<T>,
    /// Diagonal `rho(x, x)` at each recorded time (continuum density).
    pub position_density: Vec<Vec<T>>,
    /// Full states, present when requested.
    pub states: Vec<DensityMatrix<T>>,
    pub warnings: WarningCounters,
}

impl<T: Real> MasterHistory<T> {
    /// `|rho_jk(t)|` series; requires stored states.
    pub fn element_magnitudes(&self, j: usize, k: usize) -> Result<Vec<T>> {
        if self.states.len() != self.times.len() {
            return Err(Error::HistoryTooShort("history was recorded without states".into()));
        }
        Ok(self.states.iter().map(|r| r.elements()[(j, k)].norm()).collect())
    }

    pub fn last(&self) -> Option<&DensityMatrix<T>> {
        self.states.last()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn evolve_master_history<T: Real>(
    mut rho: DensityMatrix<T>,
    spec: &MasterEquationSpec<T>,
    dt: T,
    steps: usize,
    record_every: usize,
    keep_states: bool,
    options: &MasterOptions,
) -> Result<MasterHistory<T>> {
    if record_every == 0 {
        return Err(Error::InvalidSpec("record_every must be >= 1".into()));
    }
    MasterPropagator::energy_scale(&rho, spec).check(dt)?;
    let mut prop = MasterPropagator::new(rho.grid(), spec, dt)?;
    let spectral = Spectral::for_grid(rho.grid());
    let mut h = MasterHistory {
        grid: *rho.grid(),
        times: Vec::new(),
        mean_x: Vec::new(),
        mean_p: Vec::new(),
        purity: Vec::new(),
        position_density: Vec::new(),
        states: Vec::new(),
        warnings: WarningCounters::default(),
    };
    let record = |rho: &DensityMatrix<T>, step: usize, h: &mut MasterHistory<T>| {
        h.times.push(dt * T::from_usize(step).unwrap());
        h.mean_x.push(rho.expectation_x());
        h.mean_p.push(rho.expectation_p(&spectral));
        h.purity.push(rho.purity());
        h.position_density.push(rho.position_density());
        if keep_states {
            h.states.push(rho.clone());
        }
    };
    record(&rho, 0, &mut h);
    let mut done = 0;
    while done < steps {
        let chunk = record_every.min(steps - done);
        prop.advance(&mut rho, chunk, options, &mut h.warnings)?;
        done += chunk;
        record(&rho, done, &mut h);
    }
    police_negativity(&mut rho, options, &mut h.warnings)?;
    if keep_states {
        *h.states.last_mut().unwrap() = rho;
    }
    Ok(h)
}

#[derive(Serialize)]
struct Sidecar<'a, T> {
    spec: &'a MasterEquationSpec<T>,
    grid: &'a Grid<T>,
    steps: usize,
    dt: f64,
    warnings: &'a WarningCounters,
    layout: &'static str,
}

/// Writes `rho` as a binary dump at `path` plus a JSON sidecar next to it.
pub fn write_master_checkpoint<T: Real + Serialize>(
    path: &Path,
    rho: &DensityMatrix<T>,
    spec: &MasterEquationSpec<T>,
    dt: T,
    steps: usize,
    warnings: &WarningCounters,
) -> Result<()> {
    // column-major, matching nalgebra storage
    write_amplitudes(BufWriter::new(File::create(path)?), rho.elements().as_slice())?;
    let sidecar = Sidecar {
        spec,
        grid: rho.grid(),
        steps,
        dt: dt.to_f64_lossy(),
        warnings,
        layout: "column-major complex matrix, little-endian f64 (re, im)",
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(path.with_extension("json"))?), &sidecar)?;
    Ok(())
}
