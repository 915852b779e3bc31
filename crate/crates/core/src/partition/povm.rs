use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::{PhaseCell, PhasePartition, Window};
use crate::error::{Error, Result};
use crate::grid::{CoherentStateSpec, Grid, Spectral, WaveFunction};

type C64 = nalgebra::Complex<f64>;

pub const DEFAULT_QUADRATURE: usize = 8;
/// Eigenvalues of `Π` below this are dropped from the factorization.
const EIGEN_FLOOR: f64 = 1e-13;
/// Cells further apart than this many widths (σ in q, ħ/σ in p) are
/// treated as exactly orthogonal in the approximate-PVM check; the
/// neglected overlap is below `exp(-32)`.
const PAIR_CUTOFF: f64 = 16.0;
/// Largest midpoint spacing, in units of σ along q and ħ/σ along p. The
/// p-sum of `|z><z|` aliases at `|x - x'| = 2πħ/dp`, so coarser lattices
/// add spurious coherences of order `exp(-(2πħ/dp)² / 8σ²)`.
const MAX_STEP: f64 = 0.5;
/// Fraction of probe mass that must lie inside the window on each axis.
const PROBE_SUPPORT: f64 = 0.9995;

/// One POVM element stored through its eigendecomposition,
/// `Π = U diag(s²) U†`, in the orthonormal grid basis. `√Π = U diag(s) U†`.
#[derive(Clone, Debug)]
pub struct PovmElement {
    pub cell: PhaseCell,
    u: DMatrix<C64>,
    s: DVector<f64>,
    /// Real and imaginary parts of `U` and of `U†`, for real products.
    parts: Parts,
}

#[derive(Clone, Debug)]
struct Parts {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    adj_re: DMatrix<f64>,
    adj_im: DMatrix<f64>,
}

impl Parts {
    fn new(u: &DMatrix<C64>) -> Self {
        let re = u.map(|z| z.re);
        let im = u.map(|z| z.im);
        Parts {
            adj_re: re.transpose(),
            adj_im: -im.transpose(),
            re,
            im,
        }
    }
}

/// `(X_re + i X_im)(A_re + i A_im)` from four real products.
fn complex_product(x_re: &DMatrix<f64>, x_im: &DMatrix<f64>, a: &DMatrix<C64>) -> DMatrix<C64> {
    let a_re = a.map(|z| z.re);
    let a_im = a.map(|z| z.im);
    let re = x_re * &a_re - x_im * &a_im;
    let im = x_re * &a_im + x_im * &a_re;
    re.zip_map(&im, C64::new)
}

impl PovmElement {
    pub fn index(&self) -> (i32, i32) {
        self.cell.index
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Nonzero eigenvalues of `Π`, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.s.iter().map(|s| s * s).collect()
    }

    fn dense(&self, power: i32) -> DMatrix<C64> {
        let scaled = DMatrix::from_fn(self.u.nrows(), self.u.ncols(), |j, i| {
            self.u[(j, i)] * self.s[i].powi(power)
        });
        scaled * self.u.adjoint()
    }

    /// Dense `Π` in the orthonormal grid basis.
    pub fn matrix(&self) -> DMatrix<C64> {
        self.dense(2)
    }

    /// Dense `√Π`.
    pub fn sqrt_matrix(&self) -> DMatrix<C64> {
        self.dense(1)
    }

    /// `<ψ|Π|ψ> · dx` for a continuum-normalized amplitude vector.
    pub fn weight_pure(&self, amps: &[C64], dx: f64) -> f64 {
        let c = self.u.adjoint() * DVector::from_column_slice(amps);
        c.iter().zip(self.s.iter()).map(|(c, s)| c.norm_sqr() * s * s).sum::<f64>() * dx
    }

    fn adjoint_times(&self, a: &DMatrix<C64>) -> DMatrix<C64> {
        complex_product(&self.parts.adj_re, &self.parts.adj_im, a)
    }

    /// `√Π A` applied to every column of `a` (rows index the grid).
    pub fn apply_sqrt(&self, a: &DMatrix<C64>) -> DMatrix<C64> {
        let mut c = self.adjoint_times(a);
        for (i, mut row) in c.row_iter_mut().enumerate() {
            row *= C64::new(self.s[i], 0.0);
        }
        complex_product(&self.parts.re, &self.parts.im, &c)
    }

    /// `Σ_columns <a|Π|a>`, without forming `√Π a`.
    pub fn expectation_columns(&self, a: &DMatrix<C64>) -> f64 {
        let c = self.adjoint_times(a);
        c.row_iter()
            .zip(self.s.iter())
            .map(|(row, s)| s * s * row.norm_squared())
            .sum()
    }

    /// `Tr(Π ρ) · dx`.
    pub fn weight_density(&self, rho: &DMatrix<C64>, dx: f64) -> f64 {
        let ru = rho * &self.u;
        (0..self.rank())
            .map(|i| self.s[i] * self.s[i] * self.u.column(i).dotc(&ru.column(i)).re)
            .sum::<f64>()
            * dx
    }

    /// `√Π ρ √Π`.
    pub fn conjugate_sqrt(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let w = self.u.adjoint() * rho * &self.u;
        let r = self.rank();
        let core = DMatrix::from_fn(r, r, |a, b| w[(a, b)] * (self.s[a] * self.s[b]));
        &self.u * core * self.u.adjoint()
    }

    fn scaled_basis(&self, power: i32) -> DMatrix<C64> {
        DMatrix::from_fn(self.u.nrows(), self.u.ncols(), |j, i| {
            self.u[(j, i)] * self.s[i].powi(power)
        })
    }
}

/// Coherent-state POVM over a partition, tied to one grid and width.
#[derive(Clone, Debug)]
pub struct Povm {
    pub grid: Grid<f64>,
    pub sigma: f64,
    pub window: Window,
    pub quadrature: usize,
    pub elements: Vec<PovmElement>,
}

impl Povm {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PovmElement> {
        self.elements.iter()
    }

    pub fn position(&self, index: (i32, i32)) -> Option<usize> {
        self.elements.iter().position(|e| e.index() == index)
    }

    /// Dense `Σ_α Π_α`.
    pub fn total(&self) -> DMatrix<C64> {
        let n = self.grid.n_points();
        self.elements
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, e| acc + e.matrix())
    }

    /// Phase-space box outside which the element's coherent states are
    /// negligible, `cell ± margin` widths.
    pub fn reach(&self, element: &PovmElement, margin: f64) -> Window {
        let sq = margin * self.sigma;
        let sp = margin * self.grid.hbar() / (2.0 * self.sigma);
        Window {
            q: (element.cell.q_range.0 - sq, element.cell.q_range.1 + sq),
            p: (element.cell.p_range.0 - sp, element.cell.p_range.1 + sp),
        }
    }
}

/// Points per axis actually used for a cell: the configured count, raised
/// until the lattice spacing is at most `MAX_STEP` widths.
pub fn quadrature_points(cell: &PhaseCell, sigma: f64, hbar: f64, quadrature: usize) -> (usize, usize) {
    let nq = ((cell.q_range.1 - cell.q_range.0) / (MAX_STEP * sigma)).ceil() as usize;
    let np = ((cell.p_range.1 - cell.p_range.0) / (MAX_STEP * hbar / sigma)).ceil() as usize;
    (quadrature.max(nq), quadrature.max(np))
}

/// Coherent state normalized on the infinite line, so a state cut off by
/// the grid edge keeps its true (reduced) weight instead of being inflated.
fn line_gaussian(grid: &Grid<f64>, q: f64, p: f64, sigma: f64) -> Vec<C64> {
    let norm = (std::f64::consts::TAU * sigma * sigma).powf(-0.25);
    let hbar = grid.hbar();
    grid.positions()
        .into_iter()
        .map(|x| C64::from_polar(norm * (-(x - q).powi(2) / (4.0 * sigma * sigma)).exp(), p * x / hbar))
        .collect()
}

fn cell_element(cell: &PhaseCell, grid: &Grid<f64>, sigma: f64, quadrature: usize) -> PovmElement {
    let n = grid.n_points();
    let hbar = grid.hbar();
    let (nq, np) = quadrature_points(cell, sigma, hbar, quadrature);
    let dq = (cell.q_range.1 - cell.q_range.0) / nq as f64;
    let dp = (cell.p_range.1 - cell.p_range.0) / np as f64;
    let scale = (dq * dp / (std::f64::consts::TAU * hbar) * grid.spacing()).sqrt();
    let mut f = DMatrix::<C64>::zeros(n, nq * np);
    for a in 0..nq {
        let qa = cell.q_range.0 + (a as f64 + 0.5) * dq;
        for b in 0..np {
            let pb = cell.p_range.0 + (b as f64 + 0.5) * dp;
            let col = line_gaussian(grid, qa, pb, sigma);
            for (j, z) in col.iter().enumerate() {
                f[(j, a * np + b)] = *z * scale;
            }
        }
    }
    // Π = F F†. Diagonalize whichever of F F† and F†F is smaller; for the
    // Gram matrix F†F = V Λ V† the eigenvectors of Π are F V Λ^{-1/2}.
    let through_gram = nq * np <= n;
    let eig = if through_gram {
        (f.adjoint() * &f).symmetric_eigen()
    } else {
        (&f * f.adjoint()).symmetric_eigen()
    };
    let mut order: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > EIGEN_FLOOR)
        .collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = DMatrix::<C64>::zeros(n, order.len());
    let mut s = DVector::<f64>::zeros(order.len());
    for (c, &i) in order.iter().enumerate() {
        let lam = eig.eigenvalues[i];
        if through_gram {
            let col = &f * eig.eigenvectors.column(i) / C64::new(lam.sqrt(), 0.0);
            u.set_column(c, &col);
        } else {
            u.set_column(c, &eig.eigenvectors.column(i));
        }
        s[c] = lam.sqrt();
    }
    PovmElement {
        cell: *cell,
        parts: Parts::new(&u),
        u,
        s,
    }
}

/// Builds `Π_α = ∫_cell dq dp/(2πħ) |z><z|` for every cell by midpoint
/// quadrature.
pub fn build_povm(partition: &PhasePartition, sigma: f64, grid: &Grid<f64>) -> Result<Povm> {
    partition.validate(grid.hbar())?;
    CoherentStateSpec::new(0.0, 0.0, sigma).validate(grid)?;
    let w = &partition.window;
    let half = grid.length() / 2.0;
    let p_max = grid.nyquist_momentum();
    if w.q.0 < -half || w.q.1 > half || w.p.0 < -p_max || w.p.1 > p_max {
        return Err(Error::InvalidPartition(format!(
            "window {w:?} exceeds the grid's phase-space extent [{}, {}] x [{}, {}]",
            -half, half, -p_max, p_max
        )));
    }
    let elements = partition
        .cells
        .par_iter()
        .map(|c| cell_element(c, grid, sigma, partition.quadrature))
        .collect();
    Ok(Povm {
        grid: *grid,
        sigma,
        window: *w,
        quadrature: partition.quadrature,
        elements,
    })
}

fn mass_inside(density: &[f64], coords: &[f64], range: (f64, f64)) -> f64 {
    density
        .iter()
        .zip(coords)
        .filter(|(_, x)| **x >= range.0 && **x <= range.1)
        .map(|(d, _)| d)
        .sum()
}

/// Largest `|<ψ|(Σ Π_α - I)|ψ>|` over normalized probes.
pub fn check_completeness(povm: &Povm, probes: &[WaveFunction<f64>]) -> Result<f64> {
    let spectral = Spectral::for_grid(&povm.grid);
    let x = povm.grid.positions();
    let p = povm.grid.momenta();
    let dx = povm.grid.spacing();
    let mut worst: f64 = 0.0;
    for (i, probe) in probes.iter().enumerate() {
        povm.grid.same_as(probe.grid())?;
        let norm = probe.norm_sqr();
        let qmass: f64 = mass_inside(&probe.position_density(), &x, povm.window.q) * dx / norm;
        let pmass = mass_inside(&probe.momentum_density(&spectral), &p, povm.window.p) / norm;
        if qmass < PROBE_SUPPORT || pmass < PROBE_SUPPORT {
            return Err(Error::ProbeOutsideWindow(format!(
                "probe {i}: {qmass:.5} of position mass and {pmass:.5} of momentum mass inside the window"
            )));
        }
        let amps = probe.amplitudes().as_slice();
        let total: f64 = povm.elements.iter().map(|e| e.weight_pure(amps, dx)).sum();
        worst = worst.max((total / norm - 1.0).abs());
    }
    Ok(worst)
}

/// Operator-norm deviations from the projector algebra.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PvmDeviation {
    /// `max_α ‖Π_α² - Π_α‖`.
    pub diagonal: f64,
    /// `max_{α≠β} ‖Π_α Π_β‖`.
    pub off_diagonal: f64,
    /// Hilbert-Schmidt analogue, `‖Π_α² - Π_α‖₂ / ‖Π_α‖₂` and
    /// `‖Π_α Π_β‖₂ / (‖Π_α‖₂ ‖Π_β‖₂)^½`, maximized over cells. Reported
    /// alongside the operator norm, which is pinned near 1/4 by the
    /// eigenvalues crossing 1/2 at every cell edge.
    pub relative_hs: f64,
}

impl PvmDeviation {
    pub fn max(&self) -> f64 {
        self.diagonal.max(self.off_diagonal)
    }
}

fn separated(a: &PhaseCell, b: &PhaseCell, sq: f64, sp: f64) -> bool {
    let gq = (a.q_range.0 - b.q_range.1).max(b.q_range.0 - a.q_range.1);
    let gp = (a.p_range.0 - b.p_range.1).max(b.p_range.0 - a.p_range.1);
    gq > sq || gp > sp
}

pub fn approx_pvm_deviation(povm: &Povm) -> PvmDeviation {
    let mut diagonal: f64 = 0.0;
    let mut relative_hs: f64 = 0.0;
    let hs: Vec<f64> = povm
        .elements
        .iter()
        .map(|e| {
            let ev = e.eigenvalues();
            let norm = ev.iter().map(|l| l * l).sum::<f64>().sqrt();
            let dev2: f64 = ev.iter().map(|l| (l * l - l).powi(2)).sum();
            diagonal = ev.iter().map(|l| (l * l - l).abs()).fold(diagonal, f64::max);
            if norm > 0.0 {
                relative_hs = relative_hs.max(dev2.sqrt() / norm);
            }
            norm
        })
        .collect();
    let sq = PAIR_CUTOFF * povm.sigma;
    let sp = PAIR_CUTOFF * povm.grid.hbar() / povm.sigma;
    let scaled: Vec<DMatrix<C64>> = povm.elements.iter().map(|e| e.scaled_basis(2)).collect();
    let m = povm.elements.len();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .filter(|&(a, b)| !separated(&povm.elements[a].cell, &povm.elements[b].cell, sq, sp))
        .collect();
    // ‖Π_a Π_b‖ = ‖diag(s_a²) U_a† U_b diag(s_b²)‖ since the U have orthonormal columns
    let (off_diagonal, off_hs) = pairs
        .par_iter()
        .map(|&(a, b)| {
            let core = scaled[a].adjoint() * &scaled[b];
            if core.is_empty() {
                return (0.0, 0.0);
            }
            let rel = core.norm() / (hs[a] * hs[b]).sqrt();
            (core.singular_values().max(), rel)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    PvmDeviation {
        diagonal,
        off_diagonal,
        relative_hs: relative_hs.max(off_hs),
    }
}

/// `max_{α,β} ‖Π_α Π_β - δ_αβ Π_α‖` in operator norm.
pub fn check_approx_pvm(povm: &Povm) -> f64 {
    approx_pvm_deviation(povm).max()
}
