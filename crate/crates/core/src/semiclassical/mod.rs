//! Semiclassical waves built on Lagrangian curves: single-branch Maslov
//! waves from generating functions, WKB solutions, Hamiltonian flow of the
//! curve, fold detection and the lobe-area breakdown diagnostic.

mod surface;
mod wkb;

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, WaveFunction};
use crate::trajectory::csv_error;

pub use surface::{
    evolve_surface, fold_spacing_diagnostic, lobes, multibranch_maslov, Envelope, FoldRecord, FoldReport,
    LagrangianSurface, Lobe, SurfaceOptions, SurfaceSample, LOBE_MEASURE,
};
pub use wkb::{wkb_residual, wkb_wavefunction, WkbSolution, DEFAULT_WKB_CUTOFF};

type C64 = nalgebra::Complex<f64>;

/// Points whose Maslov density `|∂²S/∂q∂P|` exceeds its median over the
/// domain by more than `1 / DEFAULT_CAUSTIC_FLOOR` are flagged as caustic.
pub const DEFAULT_CAUSTIC_FLOOR: f64 = 0.05;

/// Generating function `S(q, P)` at a fixed value of `P`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum GeneratingFunction {
    /// `S = q P`.
    Free { fixed_p: f64 },
    /// Motion in `V = -force q` at energy `P = energy`.
    LinearPotential { mass: f64, force: f64, energy: f64 },
    /// Upper branch of the oscillator orbit at energy `P = energy`, with
    /// `S(0) = 0`.
    Harmonic { mass: f64, omega: f64, energy: f64 },
    /// `S` and `∂²S/∂q∂P` sampled on a uniform grid.
    Tabulated {
        q_min: f64,
        spacing: f64,
        action: Vec<f64>,
        mixed: Vec<f64>,
    },
}

impl GeneratingFunction {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(format!("generating function: {m}")));
        match self {
            GeneratingFunction::Free { fixed_p } if !fixed_p.is_finite() => bad("fixed_p must be finite"),
            GeneratingFunction::LinearPotential { mass, force, energy }
                if !(*mass > 0.0) || *force == 0.0 || !energy.is_finite() =>
            {
                bad("linear potential needs mass > 0 and a non-zero force")
            }
            GeneratingFunction::Harmonic { mass, omega, energy } if !(*mass > 0.0 && *omega > 0.0 && *energy > 0.0) => {
                bad("harmonic form needs positive mass, omega and energy")
            }
            GeneratingFunction::Tabulated {
                spacing, action, mixed, ..
            } => {
                if action.len() < 3 || action.len() != mixed.len() || !(*spacing > 0.0) {
                    return bad("tables need >= 3 equal-length samples and spacing > 0");
                }
                if action.iter().chain(mixed).any(|v| !v.is_finite()) {
                    return bad("tables must be finite");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Open interval on which `S` is defined.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            GeneratingFunction::Free { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            GeneratingFunction::LinearPotential { force, energy, .. } => {
                let q0 = -energy / force;
                if *force > 0.0 {
                    (q0, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, q0)
                }
            }
            GeneratingFunction::Harmonic { mass, omega, energy } => {
                let a = (2.0 * energy / (mass * omega * omega)).sqrt();
                (-a, a)
            }
            GeneratingFunction::Tabulated {
                q_min, spacing, action, ..
            } => (*q_min, q_min + spacing * (action.len() - 1) as f64),
        }
    }

    fn table_at(q_min: f64, spacing: f64, v: &[f64], q: f64) -> f64 {
        let u = ((q - q_min) / spacing).clamp(0.0, (v.len() - 1) as f64);
        let i = (u.floor() as usize).min(v.len() - 2);
        let f = u - i as f64;
        v[i] * (1.0 - f) + v[i + 1] * f
    }

    /// `S(q)`.
    pub fn action(&self, q: f64) -> f64 {
        match self {
            GeneratingFunction::Free { fixed_p } => q * fixed_p,
            GeneratingFunction::LinearPotential { mass, force, energy } => {
                let e = (energy + force * q).max(0.0);
                (2.0 * mass).sqrt() * e.powf(1.5) * 2.0 / (3.0 * force)
            }
            GeneratingFunction::Harmonic { mass, omega, .. } => {
                let (_, a) = self.domain();
                let x = q.clamp(-a, a);
                0.5 * mass * omega * (x * (a * a - x * x).max(0.0).sqrt() + a * a * (x / a).asin())
            }
            GeneratingFunction::Tabulated {
                q_min, spacing, action, ..
            } => Self::table_at(*q_min, *spacing, action, q),
        }
    }

    /// `∂S/∂q`, the momentum on the curve.
    pub fn momentum(&self, q: f64) -> f64 {
        match self {
            GeneratingFunction::Free { fixed_p } => *fixed_p,
            GeneratingFunction::LinearPotential { mass, force, energy } => {
                (2.0 * mass * (energy + force * q)).max(0.0).sqrt()
            }
            GeneratingFunction::Harmonic { mass, omega, energy } => {
                (2.0 * mass * (energy - 0.5 * mass * omega * omega * q * q)).max(0.0).sqrt()
            }
            GeneratingFunction::Tabulated {
                q_min, spacing, action, ..
            } => {
                let u = ((q - q_min) / spacing).clamp(0.0, (action.len() - 1) as f64);
                let i = (u.round() as usize).clamp(1, action.len() - 2);
                (action[i + 1] - action[i - 1]) / (2.0 * spacing)
            }
        }
    }

    /// `∂²S/∂q∂P`.
    pub fn mixed(&self, q: f64) -> f64 {
        match self {
            GeneratingFunction::Free { .. } => 1.0,
            GeneratingFunction::LinearPotential { mass, .. } | GeneratingFunction::Harmonic { mass, .. } => {
                mass / self.momentum(q)
            }
            GeneratingFunction::Tabulated {
                q_min, spacing, mixed, ..
            } => Self::table_at(*q_min, *spacing, mixed, q),
        }
    }

    /// `∂S/∂P`, the conjugate coordinate that labels points of the curve.
    pub fn label(&self, q: f64) -> f64 {
        match self {
            GeneratingFunction::Free { .. } => q,
            GeneratingFunction::LinearPotential { force, .. } => self.momentum(q) / force,
            GeneratingFunction::Harmonic { omega, .. } => {
                let (_, a) = self.domain();
                (q / a).clamp(-1.0, 1.0).asin() / omega
            }
            GeneratingFunction::Tabulated {
                q_min, spacing, mixed, ..
            } => {
                let u = ((q - q_min) / spacing).clamp(0.0, (mixed.len() - 1) as f64);
                let i = (u.floor() as usize).min(mixed.len() - 2);
                let mut s = 0.0;
                for k in 0..i {
                    s += 0.5 * (mixed[k] + mixed[k + 1]) * spacing;
                }
                let f = u - i as f64;
                let m = mixed[i] * (1.0 - f) + mixed[i + 1] * f;
                s + 0.5 * (mixed[i] + m) * f * spacing
            }
        }
    }
}

/// Semiclassical wave sampled on a grid, with per-point caustic flags.
#[derive(Clone, Debug)]
pub struct SemiclassicalWave {
    /// Grid carrying the `hbar` used for the phases.
    pub grid: Grid<f64>,
    pub amplitudes: DVector<C64>,
    pub hbar: f64,
    pub branch_count: usize,
    pub maslov_indices: Vec<i32>,
    /// Points inside a caustic neighborhood; excluded from the norm.
    pub caustic: Vec<bool>,
    /// Branch contributing the largest amplitude at each point, -1 where
    /// none does.
    pub branch_id: Vec<i32>,
    /// Classical turning points, for WKB waves.
    pub turning_points: Vec<f64>,
}

impl SemiclassicalWave {
    pub(crate) fn assemble(
        grid: &Grid<f64>,
        hbar: f64,
        mut amplitudes: Vec<C64>,
        caustic: Vec<bool>,
        branch_id: Vec<i32>,
        maslov_indices: Vec<i32>,
    ) -> Result<Self> {
        let out_grid = Grid::new(grid.n_points(), grid.length(), hbar)?;
        let dx = grid.spacing();
        let norm: f64 = amplitudes
            .iter()
            .zip(&caustic)
            .filter(|(_, c)| !**c)
            .map(|(z, _)| z.norm_sqr())
            .sum::<f64>()
            * dx;
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("semiclassical wave vanishes away from caustics".into()));
        }
        let k = 1.0 / norm.sqrt();
        amplitudes.iter_mut().for_each(|z| *z *= k);
        Ok(SemiclassicalWave {
            grid: out_grid,
            amplitudes: DVector::from_vec(amplitudes),
            hbar,
            branch_count: maslov_indices.len(),
            maslov_indices,
            caustic,
            branch_id,
            turning_points: Vec::new(),
        })
    }

    /// Grid wave function, renormalized over every point.
    pub fn to_wave(&self) -> Result<WaveFunction<f64>> {
        WaveFunction::new(self.grid, self.amplitudes.clone())?.normalized()
    }

    /// `ħ d(arg ψ)/dq` by centered differences; NaN at the ends and where
    /// a neighbor vanishes.
    pub fn local_momentum(&self) -> Vec<f64> {
        let n = self.amplitudes.len();
        let dx = self.grid.spacing();
        (0..n)
            .map(|j| {
                if j == 0 || j + 1 == n {
                    return f64::NAN;
                }
                let (a, b) = (self.amplitudes[j + 1], self.amplitudes[j - 1]);
                if a.norm() == 0.0 || b.norm() == 0.0 {
                    return f64::NAN;
                }
                self.hbar * (a * b.conj()).arg() / (2.0 * dx)
            })
            .collect()
    }

    /// Rows `x,re,im,abs2,branch_id,caustic_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "re", "im", "abs2", "branch_id", "caustic_flag"])
            .map_err(csv_error)?;
        for (j, z) in self.amplitudes.iter().enumerate() {
            w.write_record([
                self.grid.position(j).to_string(),
                z.re.to_string(),
                z.im.to_string(),
                z.norm_sqr().to_string(),
                self.branch_id[j].to_string(),
                (self.caustic[j] as u8).to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn maslov_wavefunction(gen: &GeneratingFunction, grid: &Grid<f64>, hbar: f64) -> Result<SemiclassicalWave> {
    maslov_wavefunction_with(gen, grid, hbar, DEFAULT_CAUSTIC_FLOOR)
}

/// `ψ(q) = K |∂²S/∂q∂P|^{1/2} e^{iS/ħ}` on the part of the grid inside the
/// domain of `S`. Points where the density exceeds `median / floor` are
/// capped there and flagged; a singular density strictly inside the domain
/// is refused.
pub fn maslov_wavefunction_with(
    gen: &GeneratingFunction,
    grid: &Grid<f64>,
    hbar: f64,
    floor: f64,
) -> Result<SemiclassicalWave> {
    gen.validate()?;
    if !(hbar > 0.0) || !(floor > 0.0 && floor < 1.0) {
        return Err(Error::InvalidSpec("need hbar > 0 and 0 < floor < 1".into()));
    }
    let (lo, hi) = gen.domain();
    let x = grid.positions();
    let inside: Vec<bool> = x.iter().map(|&q| q > lo && q < hi).collect();
    let density: Vec<f64> = x
        .iter()
        .zip(&inside)
        .map(|(&q, &i)| if i { gen.mixed(q).abs() } else { 0.0 })
        .collect();
    if let GeneratingFunction::Tabulated { .. } = gen {
        // a caustic strictly inside a tabulated domain shows up as a sign change
        let signs: Vec<f64> = x
            .iter()
            .zip(&inside)
            .filter(|(_, i)| **i)
            .map(|(&q, _)| gen.mixed(q))
            .collect();
        if let Some(w) = signs.windows(2).position(|w| w[0] * w[1] <= 0.0) {
            let q = x[inside.iter().position(|i| *i).unwrap() + w];
            return Err(Error::CausticInDomain { q });
        }
    }
    let med = median(density.iter().zip(&inside).filter(|(_, i)| **i).map(|(d, _)| *d).collect());
    if !med.is_finite() {
        return Err(Error::InvalidState("generating-function domain misses the grid".into()));
    }
    let cap = med / floor;
    let mut amps = Vec::with_capacity(x.len());
    let mut caustic = Vec::with_capacity(x.len());
    let mut branch = Vec::with_capacity(x.len());
    for (j, &q) in x.iter().enumerate() {
        if !inside[j] {
            amps.push(C64::new(0.0, 0.0));
            caustic.push(false);
            branch.push(-1);
            continue;
        }
        let d = density[j];
        let flagged = !(d <= cap);
        let a = if flagged { cap } else { d }.sqrt();
        amps.push(C64::from_polar(a, gen.action(q) / hbar));
        caustic.push(flagged);
        branch.push(0);
    }
    SemiclassicalWave::assemble(grid, hbar, amps, caustic, branch, vec![0])
}

/// `h0, h0/2, h0/4, ...`, `count` values.
pub fn hbar_ladder(h0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| h0 / 2f64.powi(k as i32)).collect()
}
