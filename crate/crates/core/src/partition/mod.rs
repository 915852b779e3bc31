//! Rectangular partitions of phase space and the coherent-state POVMs they
//! induce, `Π_α = ∫_cell dq dp/(2πħ) |z><z|`.

mod povm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use povm::{
    approx_pvm_deviation, build_povm, check_approx_pvm, check_completeness, quadrature_points, Povm, PovmElement,
    PvmDeviation, DEFAULT_QUADRATURE,
};

/// Axis-aligned rectangle in `(q, p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub q: (f64, f64),
    pub p: (f64, f64),
}

impl Window {
    pub fn new(q: (f64, f64), p: (f64, f64)) -> Self {
        Window { q, p }
    }

    pub fn area(&self) -> f64 {
        (self.q.1 - self.q.0) * (self.p.1 - self.p.0)
    }

    pub fn contains(&self, q: f64, p: f64) -> bool {
        q >= self.q.0 && q <= self.q.1 && p >= self.p.0 && p <= self.p.1
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.q.0 <= other.q.1 && other.q.0 <= self.q.1 && self.p.0 <= other.p.1 && other.p.0 <= self.p.1
    }

    pub fn translated(&self, dq: f64, dp: f64) -> Self {
        Window {
            q: (self.q.0 + dq, self.q.1 + dq),
            p: (self.p.0 + dp, self.p.1 + dp),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub index: (i32, i32),
    pub q_range: (f64, f64),
    pub p_range: (f64, f64),
}

impl PhaseCell {
    pub fn area(&self) -> f64 {
        (self.q_range.1 - self.q_range.0) * (self.p_range.1 - self.p_range.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.q_range.0 + self.q_range.1),
            0.5 * (self.p_range.0 + self.p_range.1),
        )
    }

    fn degenerate(&self) -> bool {
        !(self.q_range.1 > self.q_range.0) || !(self.p_range.1 > self.p_range.0)
    }

    fn overlap_area(&self, other: &PhaseCell) -> f64 {
        let dq = self.q_range.1.min(other.q_range.1) - self.q_range.0.max(other.q_range.0);
        let dp = self.p_range.1.min(other.p_range.1) - self.p_range.0.max(other.p_range.0);
        dq.max(0.0) * dp.max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePartition {
    pub cells: Vec<PhaseCell>,
    pub window: Window,
    /// Midpoint-rule points per cell along each axis.
    pub quadrature: usize,
}

impl PhasePartition {
    /// Checks tiling and the `area > ħ` applicability condition.
    pub fn new(cells: Vec<PhaseCell>, window: Window, quadrature: usize, hbar: f64) -> Result<Self> {
        let p = PhasePartition {
            cells,
            window,
            quadrature,
        };
        p.validate(hbar)?;
        Ok(p)
    }

    /// `n_q × n_p` equal cells tiling `window`, indexed `(i, j)` from the
    /// lower-left corner.
    pub fn regular(window: Window, n_q: usize, n_p: usize, quadrature: usize, hbar: f64) -> Result<Self> {
        if n_q == 0 || n_p == 0 {
            return Err(Error::InvalidPartition("need at least one cell per axis".into()));
        }
        let wq = (window.q.1 - window.q.0) / n_q as f64;
        let wp = (window.p.1 - window.p.0) / n_p as f64;
        let mut cells = Vec::with_capacity(n_q * n_p);
        for i in 0..n_q {
            for j in 0..n_p {
                let q0 = window.q.0 + i as f64 * wq;
                let p0 = window.p.0 + j as f64 * wp;
                // pin the outer edges to the window so the tiling is exact
                let q1 = if i + 1 == n_q { window.q.1 } else { q0 + wq };
                let p1 = if j + 1 == n_p { window.p.1 } else { p0 + wp };
                cells.push(PhaseCell {
                    index: (i as i32, j as i32),
                    q_range: (q0, q1),
                    p_range: (p0, p1),
                });
            }
        }
        Self::new(cells, window, quadrature, hbar)
    }

    pub fn single(window: Window, quadrature: usize, hbar: f64) -> Result<Self> {
        Self::regular(window, 1, 1, quadrature, hbar)
    }

    pub fn validate(&self, hbar: f64) -> Result<()> {
        if self.quadrature < 4 {
            return Err(Error::InvalidPartition(format!(
                "quadrature = {} must be >= 4 points per axis",
                self.quadrature
            )));
        }
        if self.cells.is_empty() {
            return Err(Error::InvalidPartition("no cells".into()));
        }
        let w = &self.window;
        if !(w.q.1 > w.q.0) || !(w.p.1 > w.p.0) {
            return Err(Error::InvalidPartition(format!("degenerate window {w:?}")));
        }
        let tol = 1e-9 * w.area();
        for c in &self.cells {
            if c.degenerate() {
                return Err(Error::InvalidPartition(format!("cell {:?} has empty range", c.index)));
            }
            if c.area() <= hbar {
                return Err(Error::CellTooSmall {
                    index: c.index,
                    area: c.area(),
                    hbar,
                });
            }
            let slack = 1e-12 * (w.q.1 - w.q.0).max(w.p.1 - w.p.0);
            if c.q_range.0 < w.q.0 - slack
                || c.q_range.1 > w.q.1 + slack
                || c.p_range.0 < w.p.0 - slack
                || c.p_range.1 > w.p.1 + slack
            {
                return Err(Error::InvalidPartition(format!("cell {:?} leaves the window", c.index)));
            }
        }
        for (a, ca) in self.cells.iter().enumerate() {
            for cb in &self.cells[a + 1..] {
                if ca.index == cb.index {
                    return Err(Error::InvalidPartition(format!("duplicate index {:?}", ca.index)));
                }
                if ca.overlap_area(cb) > tol {
                    return Err(Error::InvalidPartition(format!(
                        "cells {:?} and {:?} overlap",
                        ca.index, cb.index
                    )));
                }
            }
        }
        let covered: f64 = self.cells.iter().map(PhaseCell::area).sum();
        if (covered - w.area()).abs() > tol {
            return Err(Error::InvalidPartition(format!(
                "cells cover {covered} of window area {}",
                w.area()
            )));
        }
        Ok(())
    }

    pub fn position(&self, index: (i32, i32)) -> Option<usize> {
        self.cells.iter().position(|c| c.index == index)
    }

    /// The same tiling shifted by `(dq, dp)`.
    pub fn translated(&self, dq: f64, dp: f64) -> Self {
        PhasePartition {
            cells: self
                .cells
                .iter()
                .map(|c| PhaseCell {
                    index: c.index,
                    q_range: (c.q_range.0 + dq, c.q_range.1 + dq),
                    p_range: (c.p_range.0 + dp, c.p_range.1 + dp),
                })
                .collect(),
            window: self.window.translated(dq, dp),
            quadrature: self.quadrature,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_tiles_window() {
        let w = Window::new((-3.0, 3.0), (-2.0, 2.0));
        let p = PhasePartition::regular(w, 3, 2, 8, 1.0).unwrap();
        assert_eq!(p.cells.len(), 6);
        assert_eq!(p.cells[5].index, (2, 1));
        assert!((p.cells.iter().map(PhaseCell::area).sum::<f64>() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_and_degenerate_cells() {
        let w = Window::new((0.0, 1.0), (0.0, 1.0));
        assert!(matches!(
            PhasePartition::single(w, 8, 1.0),
            Err(Error::CellTooSmall { .. })
        ));
        let cell = PhaseCell {
            index: (0, 0),
            q_range: (0.0, 0.0),
            p_range: (0.0, 4.0),
        };
        let w = Window::new((0.0, 0.0), (0.0, 4.0));
        assert!(PhasePartition::new(vec![cell], w, 8, 1.0).is_err());
    }

    #[test]
    fn rejects_gaps_and_overlaps() {
        let w = Window::new((0.0, 4.0), (0.0, 2.0));
        let a = PhaseCell {
            index: (0, 0),
            q_range: (0.0, 2.5),
            p_range: (0.0, 2.0),
        };
        let b = PhaseCell {
            index: (1, 0),
            q_range: (2.0, 4.0),
            p_range: (0.0, 2.0),
        };
        assert!(PhasePartition::new(vec![a, b], w, 8, 1.0).is_err());
        let b = PhaseCell {
            q_range: (2.6, 4.0),
            ..b
        };
        assert!(PhasePartition::new(vec![a, b], w, 8, 1.0).is_err());
    }
}
