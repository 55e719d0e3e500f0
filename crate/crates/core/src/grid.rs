//! Uniform position grids with periodic (DFT) momentum.
//!
//! Grid points sit at `x_j = (j - n/2) dx` (integer division), and the
//! momentum operator is diagonal in the unitary DFT basis with centered
//! wavenumbers `k = 2 pi j' / (n dx)`, `j' = -n/2 .. n - 1 - n/2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, CVector, Observable, QState, Units, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub dx: f64,
    pub hbar: f64,
}

impl GridSpec {
    pub fn new(n: usize, dx: f64, hbar: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidGrid(format!("need at least 4 points, got {n}")));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {dx}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidGrid(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self { n, dx, hbar })
    }

    fn offset(&self) -> isize {
        (self.n / 2) as isize
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n).map(|j| (j as isize - self.offset()) as f64 * self.dx).collect()
    }

    /// Centered discrete wavenumbers.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let len = self.window();
        (0..self.n)
            .map(|l| 2.0 * PI * (l as isize - self.offset()) as f64 / len)
            .collect()
    }

    /// Eigenvalues `hbar k` of the momentum operator, in the column order of
    /// [`GridSpec::momentum_eigenbasis`].
    pub fn momenta(&self) -> Vec<f64> {
        self.wavenumbers().into_iter().map(|k| self.hbar * k).collect()
    }

    pub fn window(&self) -> f64 {
        self.n as f64 * self.dx
    }

    pub fn nyquist_momentum(&self) -> f64 {
        PI * self.hbar / self.dx
    }

    pub fn position_op(&self) -> Observable {
        Observable::from_real_diagonal(&self.positions(), Units::Length)
    }

    /// Unitary DFT matrix whose columns are the plane waves `exp(i k x) / sqrt(n)`.
    pub fn momentum_eigenbasis(&self) -> CMatrix {
        let x = self.positions();
        let k = self.wavenumbers();
        let norm = (self.n as f64).sqrt();
        CMatrix::from_fn(self.n, self.n, |a, l| C64::from_polar(1.0 / norm, k[l] * x[a]))
    }

    /// `F diag(hbar k) F^dag`. Entries depend only on `a - b`, so one row of
    /// differences is summed and then scattered.
    pub fn momentum_op(&self) -> Observable {
        let n = self.n;
        let momenta = self.momenta();
        let shifts: Vec<isize> = (0..n).map(|l| l as isize - self.offset()).collect();
        let by_difference: Vec<C64> = (0..2 * n - 1)
            .map(|i| {
                let d = i as isize - (n as isize - 1);
                let mut acc = C64::new(0.0, 0.0);
                for (p, &s) in momenta.iter().zip(&shifts) {
                    let phase = 2.0 * PI * ((s * d).rem_euclid(n as isize)) as f64 / n as f64;
                    acc += C64::from_polar(*p, phase);
                }
                acc / n as f64
            })
            .collect();
        let m = CMatrix::from_fn(n, n, |a, b| by_difference[a + n - 1 - b]);
        Observable::hermitian_part(m, Units::Momentum)
    }

    /// Plane wave with centered frequency index `j'`.
    pub fn plane_wave(&self, index: isize) -> Result<QState> {
        let lo = -self.offset();
        let hi = self.n as isize - 1 - self.offset();
        if index < lo || index > hi {
            return Err(Error::GridFit(format!("frequency index {index} outside {lo}..={hi}")));
        }
        let k = 2.0 * PI * index as f64 / self.window();
        let norm = (self.n as f64).sqrt();
        let amps = CVector::from_iterator(
            self.n,
            self.positions().iter().map(|&x| C64::from_polar(1.0 / norm, k * x)),
        );
        QState::normalized(amps)
    }

    /// Gaussian wave packet `exp(-(x-x0)^2 / (4 sigma^2)) exp(i p0 x / hbar)`.
    pub fn gaussian_state(&self, x0: f64, p0: f64, sigma: f64) -> Result<QState> {
        let x = self.positions();
        let (lo, hi) = (x[0], x[self.n - 1]);
        if !(x0 >= lo && x0 <= hi) {
            return Err(Error::GridFit(format!("center {x0} outside grid [{lo}, {hi}]")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::GridFit(format!("spread must be positive, got {sigma}")));
        }
        if 4.0 * sigma >= self.window() {
            return Err(Error::GridFit(format!(
                "spread {sigma} too large for window {} (need 4 sigma < n dx)",
                self.window()
            )));
        }
        let nyquist = self.nyquist_momentum();
        if self.hbar / (2.0 * sigma) >= nyquist {
            return Err(Error::GridFit(format!(
                "spread {sigma} too small: momentum spread {} reaches Nyquist {nyquist}",
                self.hbar / (2.0 * sigma)
            )));
        }
        if p0.abs() >= nyquist {
            return Err(Error::GridFit(format!("mean momentum {p0} beyond Nyquist {nyquist}")));
        }
        let amps = CVector::from_iterator(
            self.n,
            x.iter().map(|&xj| {
                let env = (-(xj - x0).powi(2) / (4.0 * sigma * sigma)).exp();
                C64::from_polar(env, p0 * xj / self.hbar)
            }),
        );
        QState::normalized(amps)
    }

    /// Position eigenstate at grid point `x0`.
    pub fn position_eigenstate(&self, x0: f64) -> Result<QState> {
        let j = self.index_of(x0)?;
        Ok(QState::basis(self.n, j))
    }

    /// Index of the grid point equal to `x` (within `1e-9 dx`).
    pub fn index_of(&self, x: f64) -> Result<usize> {
        let j = (x / self.dx).round() as isize + self.offset();
        let on_grid = ((j - self.offset()) as f64 * self.dx - x).abs() <= 1e-9 * self.dx;
        if j < 0 || j as usize >= self.n || !on_grid {
            return Err(Error::GridFit(format!("{x} is not a grid point")));
        }
        Ok(j as usize)
    }
}
