use serde::Serialize;

use super::{SemiclassicalWave, C64};
use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Default half-width, in energy, of the flagged neighborhood around a
/// turning point.
pub const DEFAULT_WKB_CUTOFF: f64 = 1e-2;

const SCAN_POINTS: usize = 4096;
const PANELS: usize = 8;

/// Five-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// First-order WKB solution `A e^{iθ} + B e^{-iθ}` over `(2m(E - V))^{1/4}`,
/// with `θ` measured from the left end of each allowed interval.
#[derive(Clone, Debug, Serialize)]
pub struct WkbSolution {
    pub hamiltonian: HamiltonianSpec<f64>,
    pub energy: f64,
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub hbar: f64,
    pub cutoff: f64,
    /// Points with `V(q*) = E`, located by bisection.
    pub turning_points: Vec<f64>,
    /// Classically allowed intervals inside the scanned range.
    pub intervals: Vec<(f64, f64)>,
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nodes and weights of the five-point rule.
pub(super) fn gl_rule() -> impl Iterator<Item = (f64, f64)> {
    GL_NODES.into_iter().zip(GL_WEIGHTS)
}

impl WkbSolution {
    pub fn new(
        hamiltonian: &HamiltonianSpec<f64>,
        energy: f64,
        a: C64,
        b: C64,
        range: (f64, f64),
        hbar: f64,
        cutoff: f64,
    ) -> Result<Self> {
        hamiltonian.validate()?;
        if !(hbar > 0.0) || !(cutoff > 0.0) || !(range.1 > range.0) {
            return Err(Error::InvalidSpec("WKB needs hbar > 0, cutoff > 0 and a non-empty range".into()));
        }
        let f = |q: f64| energy - hamiltonian.potential(q);
        let h = (range.1 - range.0) / SCAN_POINTS as f64;
        let mut turning_points = Vec::new();
        let mut intervals = Vec::new();
        let mut start = if f(range.0) > 0.0 { Some(range.0) } else { None };
        for k in 0..SCAN_POINTS {
            let (x0, x1) = (range.0 + k as f64 * h, range.0 + (k + 1) as f64 * h);
            let (f0, f1) = (f(x0), f(x1));
            if (f0 > 0.0) != (f1 > 0.0) {
                let t = bisect(f, x0, x1);
                turning_points.push(t);
                if f1 > 0.0 {
                    start = Some(t);
                } else if let Some(s) = start.take() {
                    intervals.push((s, t));
                }
            }
        }
        if let Some(s) = start {
            intervals.push((s, range.1));
        }
        if intervals.is_empty() {
            return Err(Error::ClassicallyForbidden { energy });
        }
        Ok(WkbSolution {
            hamiltonian: hamiltonian.clone(),
            energy,
            a: (a.re, a.im),
            b: (b.re, b.im),
            hbar,
            cutoff,
            turning_points,
            intervals,
        })
    }

    pub fn momentum(&self, q: f64) -> f64 {
        (2.0 * self.hamiltonian.mass * (self.energy - self.hamiltonian.potential(q)))
            .max(0.0)
            .sqrt()
    }

    fn interval(&self, q: f64) -> Option<(f64, f64)> {
        self.intervals.iter().copied().find(|(l, r)| q > *l && q < *r)
    }

    /// `∫ p dq` from `left` to `q`, in `q = left + u²` so the square-root
    /// edge at a turning point becomes smooth.
    pub fn phase_integral(&self, left: f64, q: f64) -> f64 {
        let umax = (q - left).max(0.0).sqrt();
        let h = umax / PANELS as f64;
        let mut sum = 0.0;
        for k in 0..PANELS {
            let mid = (k as f64 + 0.5) * h;
            for (x, w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                let u = mid + 0.5 * h * x;
                sum += w * 0.5 * h * self.momentum(left + u * u) * 2.0 * u;
            }
        }
        sum
    }

    /// `ψ(q)`, zero in forbidden regions. Inside the cutoff the amplitude
    /// is held at its cutoff value.
    pub fn eval(&self, q: f64) -> C64 {
        let Some((left, _)) = self.interval(q) else {
            return C64::new(0.0, 0.0);
        };
        let gap = (self.energy - self.hamiltonian.potential(q)).max(self.cutoff);
        let amp = (2.0 * self.hamiltonian.mass * gap).powf(-0.25);
        let theta = self.phase_integral(left, q) / self.hbar;
        let (a, b) = (C64::new(self.a.0, self.a.1), C64::new(self.b.0, self.b.1));
        (a * C64::from_polar(1.0, theta) + b * C64::from_polar(1.0, -theta)) * amp
    }

    pub fn flagged(&self, q: f64) -> bool {
        (self.energy - self.hamiltonian.potential(q)).abs() < self.cutoff
    }

    /// Local de Broglie wavelength `2πħ/p`.
    pub fn wavelength(&self, q: f64) -> f64 {
        std::f64::consts::TAU * self.hbar / self.momentum(q)
    }

    /// `-ħ²/2m ψ'' + (V - E) ψ` with a five-point stencil of step
    /// `1e-3` local wavelengths.
    pub fn residual(&self, q: f64) -> C64 {
        let h = 1e-3 * self.wavelength(q);
        let f = |x: f64| self.eval(x);
        let d2 = (-f(q + 2.0 * h) + f(q + h) * 16.0 - f(q) * 30.0 + f(q - h) * 16.0 - f(q - 2.0 * h)) / (12.0 * h * h);
        let m = self.hamiltonian.mass;
        -d2 * (self.hbar * self.hbar / (2.0 * m)) + f(q) * (self.hamiltonian.potential(q) - self.energy)
    }
}

/// Samples the WKB solution on `grid`, flagging `|E - V| < cutoff` and
/// the grid points nearest the turning points.
#[allow(clippy::too_many_arguments)]
pub fn wkb_wavefunction(
    ham: &HamiltonianSpec<f64>,
    energy: f64,
    a: C64,
    b: C64,
    grid: &Grid<f64>,
    hbar: f64,
    cutoff: f64,
) -> Result<(SemiclassicalWave, WkbSolution)> {
    let x = grid.positions();
    let range = (x[0], x[x.len() - 1]);
    let sol = WkbSolution::new(ham, energy, a, b, range, hbar, cutoff)?;
    let amps: Vec<C64> = x.iter().map(|&q| sol.eval(q)).collect();
    let mut caustic: Vec<bool> = x.iter().map(|&q| sol.flagged(q)).collect();
    // a steep potential can step over the cutoff band, so the nearest
    // grid point to each turning point is always flagged
    let dx = grid.spacing();
    for t in &sol.turning_points {
        let k = ((t - x[0]) / dx).round() as usize;
        caustic[k.min(x.len() - 1)] = true;
    }
    let branch: Vec<i32> = x
        .iter()
        .map(|&q| sol.intervals.iter().position(|(l, r)| q > *l && q < *r).map_or(-1, |i| i as i32))
        .collect();
    let indices = (0..sol.intervals.len() as i32).map(|_| 0).collect();
    let mut wave = SemiclassicalWave::assemble(grid, hbar, amps, caustic, branch, indices)?;
    wave.turning_points = sol.turning_points.clone();
    Ok((wave, sol))
}

/// RMS Schrödinger residual over the points of `q` that lie at least
/// `margin` (in energy) inside an allowed region.
pub fn wkb_residual(sol: &WkbSolution, q: &[f64], margin: f64) -> f64 {
    let picked: Vec<f64> = q
        .iter()
        .copied()
        .filter(|&x| sol.energy - sol.hamiltonian.potential(x) > margin && sol.interval(x).is_some())
        .collect();
    if picked.is_empty() {
        return f64::NAN;
    }
    (picked.iter().map(|&x| sol.residual(x).norm_sqr()).sum::<f64>() / picked.len() as f64).sqrt()
}
