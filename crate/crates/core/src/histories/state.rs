use crate::grid::{CompositeState, DensityMatrix, Grid, Spectral, WaveFunction};
use crate::partition::Window;

/// Marginal densities below this fraction of their peak count as empty
/// when bounding a state's phase-space support.
const SUPPORT_FLOOR: f64 = 1e-16;

/// Unnormalized branch state: a pure system-register vector in closed mode,
/// a reduced density matrix in open mode.
#[derive(Clone, Debug, PartialEq)]
pub enum BranchState {
    Pure(CompositeState<f64>),
    Mixed(DensityMatrix<f64>),
}

impl BranchState {
    pub fn pure(psi: &WaveFunction<f64>) -> Self {
        BranchState::Pure(CompositeState::from_system(psi.clone()))
    }

    pub fn mixed(psi: &WaveFunction<f64>) -> Self {
        BranchState::Mixed(DensityMatrix::from_pure(psi))
    }

    pub fn mode(&self) -> &'static str {
        match self {
            BranchState::Pure(_) => "closed",
            BranchState::Mixed(_) => "open",
        }
    }

    pub fn grid(&self) -> &Grid<f64> {
        match self {
            BranchState::Pure(s) => s.grid(),
            BranchState::Mixed(r) => r.grid(),
        }
    }

    pub fn weight(&self) -> f64 {
        match self {
            BranchState::Pure(s) => s.norm_sqr(),
            BranchState::Mixed(r) => r.trace(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            BranchState::Pure(s) => {
                let mut s = s.clone();
                let f = factor.sqrt();
                s.amplitudes_mut().iter_mut().for_each(|z| *z *= f);
                BranchState::Pure(s)
            }
            BranchState::Mixed(r) => BranchState::Mixed(r.clone().scaled(factor)),
        }
    }

    /// Copy rescaled to unit weight.
    pub fn normalized(&self) -> Self {
        self.scaled(1.0 / self.weight())
    }

    /// Position and momentum marginals (momentum in FFT order), unnormalized.
    pub fn marginals(&self, spectral: &Spectral<f64>) -> (Vec<f64>, Vec<f64>) {
        match self {
            BranchState::Pure(s) => {
                let n = s.grid().n_points();
                let mut px = vec![0.0; n];
                let mut pp = vec![0.0; n];
                for c in s.components() {
                    let mut buf = c.to_vec();
                    spectral.forward(&mut buf);
                    for j in 0..n {
                        px[j] += c[j].norm_sqr();
                        pp[j] += buf[j].norm_sqr();
                    }
                }
                (px, pp)
            }
            BranchState::Mixed(r) => (r.position_density(), r.momentum_density(spectral)),
        }
    }

    /// Branch-relative `(<X>, <P>)`, normalized by the branch weight.
    pub fn expectations(&self) -> (f64, f64) {
        let spectral = Spectral::for_grid(self.grid());
        self.expectations_with(&spectral)
    }

    pub fn expectations_with(&self, spectral: &Spectral<f64>) -> (f64, f64) {
        match self {
            BranchState::Pure(s) => (s.expectation_x(), s.expectation_p(spectral)),
            BranchState::Mixed(r) => {
                let w = r.trace();
                (r.expectation_x() / w, r.expectation_p(spectral) / w)
            }
        }
    }

    /// Position spread of the normalized branch state.
    pub fn position_spread(&self) -> f64 {
        let grid = self.grid();
        let (px, _) = match self {
            BranchState::Pure(_) => self.marginals(&Spectral::for_grid(grid)),
            BranchState::Mixed(r) => (r.position_density(), Vec::new()),
        };
        let total: f64 = px.iter().sum();
        let x = grid.positions();
        let m = px.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / total;
        let m2 = px.iter().zip(&x).map(|(w, x)| w * x * x).sum::<f64>() / total;
        (m2 - m * m).max(0.0).sqrt()
    }

    /// Bounding box of the phase-space region the state occupies.
    pub fn support(&self) -> Window {
        let grid = self.grid();
        let spectral = Spectral::for_grid(grid);
        let (px, pp) = self.marginals(&spectral);
        let range = |d: &[f64], coords: &[f64]| {
            let peak = d.iter().copied().fold(0.0, f64::max);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (w, c) in d.iter().zip(coords) {
                if *w > peak * SUPPORT_FLOOR {
                    lo = lo.min(*c);
                    hi = hi.max(*c);
                }
            }
            (lo, hi)
        };
        Window {
            q: range(&px, &grid.positions()),
            p: range(&pp, &grid.momenta()),
        }
    }
}
