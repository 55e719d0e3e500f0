//! POVM of a measuring process and the checks built on it.
//!
//! `Pi_k = <xi| U^dag (I (x) E_k) U |xi>` is computed from the columns
//! `U |b, xi>` rotated into the meter eigenbasis: if `R_b[r, c]` is the
//! coefficient of `|c> (x) v_r` in column `b`, then
//! `Pi_k[a, b] = sum_c sum over rows r in cluster k of conj(R_a[r, c]) R_b[r, c]`.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    as_blocks, random_commuting_unitary, random_unitary, CMatrix, CVector, Observable, QState,
    SparseBlocks, UnitaryOp, Units, C64,
};
use crate::process::MeasurementProcess;

/// Composite vector in the meter eigenbasis: `coeffs[r, a]` is the weight of
/// `|a> (x) v_r`, with `v_r` the `r`-th sorted meter eigenvector.
pub(crate) struct RotatedImage {
    coeffs: CMatrix,
}

impl RotatedImage {
    pub(crate) fn of_vector(proc: &MeasurementProcess, v: &CVector) -> Self {
        let blocks = as_blocks(v, proc.dims());
        Self { coeffs: proc.meter_spectrum().rotate_in(&blocks) }
    }

    pub(crate) fn coeffs(&self) -> &CMatrix {
        &self.coeffs
    }
}

/// The columns `U |b, xi>` with each nonzero probe block expressed in the
/// meter eigenbasis. Interactions that keep the object index (such as a
/// position-controlled shift) leave one block per column, which makes every
/// contraction below linear rather than cubic in the object dimension.
pub(crate) struct MeterFrame {
    n_object: usize,
    n_probe: usize,
    columns: Vec<SparseBlocks>,
}

impl MeterFrame {
    pub(crate) fn of(proc: &MeasurementProcess) -> Self {
        let dims = proc.dims();
        let spectrum = proc.meter_spectrum();
        let columns = proc
            .interaction()
            .image_of_product_basis(dims, proc.probe_state().amplitudes())
            .into_iter()
            .map(|blocks| {
                blocks
                    .into_iter()
                    .map(|(a, v)| {
                        let m = CMatrix::from_column_slice(dims.probe, 1, v.as_slice());
                        (a, spectrum.rotate_in(&m).column(0).into_owned())
                    })
                    .collect()
            })
            .collect();
        Self { n_object: dims.object, n_probe: dims.probe, columns }
    }

    /// `(A (x) I)` applied to every column.
    pub(crate) fn with_object_op(&self, a: &CMatrix) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|blocks| {
                let mut acc: Vec<Option<CVector>> = vec![None; self.n_object];
                for (c, v) in blocks {
                    for (r, slot) in acc.iter_mut().enumerate() {
                        let coef = a[(r, *c)];
                        if coef != C64::new(0.0, 0.0) {
                            let term = v * coef;
                            match slot {
                                Some(s) => *s += term,
                                None => *slot = Some(term),
                            }
                        }
                    }
                }
                acc.into_iter().enumerate().filter_map(|(r, v)| v.map(|v| (r, v))).collect()
            })
            .collect();
        Self { n_object: self.n_object, n_probe: self.n_probe, columns }
    }

    /// `G[a, b] = sum_c sum_{r in rows} w_r conj(self_a[c][r]) other_b[c][r]`,
    /// with unit weights when `weights` is `None`.
    pub(crate) fn gram(&self, other: &Self, rows: Range<usize>, weights: Option<&[f64]>) -> CMatrix {
        let (left, right) = (self.by_block(), other.by_block());
        let mut g = CMatrix::zeros(self.columns.len(), other.columns.len());
        for c in 0..self.n_object {
            for &(a, u) in &left[c] {
                for &(b, v) in &right[c] {
                    let mut acc = C64::new(0.0, 0.0);
                    for r in rows.clone() {
                        let term = u[r].conj() * v[r];
                        acc += match weights {
                            Some(w) => term * w[r],
                            None => term,
                        };
                    }
                    g[(a, b)] += acc;
                }
            }
        }
        g
    }

    /// For each object index `c`, the columns with a nonzero block there.
    fn by_block(&self) -> Vec<Vec<(usize, &CVector)>> {
        let mut out: Vec<Vec<(usize, &CVector)>> = vec![Vec::new(); self.n_object];
        for (b, blocks) in self.columns.iter().enumerate() {
            for (c, v) in blocks {
                out[*c].push((b, v));
            }
        }
        out
    }

    pub(crate) fn all_rows(&self) -> Range<usize> {
        0..self.n_probe
    }
}

#[derive(Debug, Clone)]
pub struct PovmOutcome {
    /// Meter value (cluster mean), length units.
    pub value: f64,
    pub element: Observable,
}

#[derive(Debug, Clone)]
pub struct PovmSet {
    pub outcomes: Vec<PovmOutcome>,
    pub clustering_tol: f64,
}

/// First and second moment operators `sum m_k Pi_k` and `sum m_k^2 Pi_k`.
#[derive(Debug, Clone)]
pub struct MomentOperators {
    pub o1: Observable,
    pub o2: Observable,
}

impl PovmSet {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.outcomes.first().map_or(0, |o| o.element.dim())
    }

    /// Operator norm of `sum_k Pi_k - I`.
    pub fn completeness_deviation(&self) -> f64 {
        let n = self.dim();
        let mut sum = CMatrix::zeros(n, n);
        for o in &self.outcomes {
            sum += o.element.matrix();
        }
        sum -= CMatrix::identity(n, n);
        Observable::hermitian_part(sum, Units::Dimensionless).operator_norm()
    }

    /// Smallest eigenvalue over all elements.
    pub fn min_eigenvalue(&self) -> f64 {
        self.outcomes
            .iter()
            .flat_map(|o| o.element.eigenvalues().into_iter().next())
            .fold(f64::INFINITY, f64::min)
    }

    /// Positivity (`min eigenvalue >= -tol`) and completeness (`<= tol`).
    pub fn is_valid(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol && self.completeness_deviation() <= tol
    }

    pub fn moments(&self) -> MomentOperators {
        let n = self.dim();
        let mut o1 = CMatrix::zeros(n, n);
        let mut o2 = CMatrix::zeros(n, n);
        for o in &self.outcomes {
            let m = o.value;
            o1 += o.element.matrix().map(|z| z * m);
            o2 += o.element.matrix().map(|z| z * (m * m));
        }
        MomentOperators {
            o1: Observable::hermitian_part(o1, Units::Length),
            o2: Observable::hermitian_part(o2, Units::LengthSquared),
        }
    }

    /// Outcome probabilities `<psi| Pi_k |psi>`.
    pub fn probabilities(&self, psi: &QState) -> Vec<f64> {
        let v = psi.amplitudes();
        self.outcomes.iter().map(|o| v.dotc(&(o.element.matrix() * v)).re).collect()
    }
}

/// POVM of `proc`, one element per meter eigenvalue cluster.
pub fn extract_povm(proc: &MeasurementProcess) -> PovmSet {
    let frame = MeterFrame::of(proc);
    let outcomes = proc
        .meter_spectrum()
        .clusters
        .iter()
        .map(|c| PovmOutcome {
            value: c.value,
            element: Observable::hermitian_part(
                frame.gram(&frame, c.start..c.start + c.len, None),
                Units::Dimensionless,
            ),
        })
        .collect();
    PovmSet { outcomes, clustering_tol: proc.tolerances().cluster }
}

/// `epsilon` recomputed from the first two moment operators only.
pub fn epsilon_from_moments(
    psi: &QState,
    x: &Observable,
    mom: &MomentOperators,
    radicand_tol: f64,
) -> Result<f64> {
    if psi.dim() != x.dim() || x.dim() != mom.o1.dim() || x.dim() != mom.o2.dim() {
        return Err(Error::DimMismatch(format!(
            "state dim {}, observable dim {}, moment dims {} and {}",
            psi.dim(),
            x.dim(),
            mom.o1.dim(),
            mom.o2.dim()
        )));
    }
    let v = psi.amplitudes();
    let xv = x.matrix() * v;
    let o1v = mom.o1.matrix() * v;
    let second = v.dotc(&(mom.o2.matrix() * v)).re;
    let q = second - 2.0 * o1v.dotc(&xv).re + xv.norm_squared();
    if q < -radicand_tol {
        return Err(Error::InconsistentMoments(q));
    }
    Ok(q.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornCheck {
    pub max_deviation: f64,
    pub is_born: bool,
}

/// Compare each POVM element with the spectral projector of the measured
/// observable at the same value.
///
/// Outcomes are paired with the nearest cluster of `x` when it lies within
/// the clustering tolerance; unpaired outcomes are compared with zero, and
/// so are projectors of `x` that no outcome reaches.
pub fn born_check(proc: &MeasurementProcess) -> BornCheck {
    let povm = extract_povm(proc);
    let tol = proc.tolerances();
    let xs = proc.measured().spectrum(tol.cluster);
    let x_values = xs.cluster_values();
    let scale = xs.diameter().max(proc.meter_spectrum().diameter());
    let match_tol = (tol.cluster * scale).max(1e-300);

    let n = proc.dims().object;
    let mut paired: Vec<CMatrix> = vec![CMatrix::zeros(n, n); x_values.len()];
    let mut max_deviation: f64 = 0.0;
    for o in &povm.outcomes {
        let nearest = x_values
            .iter()
            .enumerate()
            .map(|(j, &v)| (j, (v - o.value).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((j, d)) if d <= match_tol => paired[j] += o.element.matrix(),
            _ => max_deviation = max_deviation.max(o.element.operator_norm()),
        }
    }
    for (j, sum) in paired.into_iter().enumerate() {
        let diff = sum - xs.projector(j);
        let dev = Observable::hermitian_part(diff, Units::Dimensionless).operator_norm();
        max_deviation = max_deviation.max(dev);
    }
    BornCheck { max_deviation, is_born: max_deviation <= tol.born }
}

/// Random unitary on the composite space that commutes with `I (x) X`:
/// `(sum_k B_k (x) E_k) (I (x) V)` with Haar-random object unitaries `B_k`,
/// one per meter cluster, and `V` a random unitary commuting with `X`.
///
/// Appending it to the interaction leaves every POVM element unchanged while
/// still acting on the object. The result is dense.
pub fn random_outcome_preserving_unitary<R: Rng + ?Sized>(
    proc: &MeasurementProcess,
    rng: &mut R,
) -> UnitaryOp {
    let dims = proc.dims();
    let spectrum = proc.meter_spectrum();
    let mut controlled = CMatrix::zeros(dims.total(), dims.total());
    for k in 0..spectrum.clusters.len() {
        let b = random_unitary(dims.object, rng).to_dense();
        controlled += b.kronecker(&spectrum.projector(k));
    }
    let v = random_commuting_unitary(spectrum, rng).to_dense();
    let probe_part = CMatrix::identity(dims.object, dims.object).kronecker(&v);
    UnitaryOp::from_matrix(controlled * probe_part).expect("product of unitaries")
}

/// `|(X(t) - x (x) I) |psi, xi>|`.
pub fn perfect_correlation_residual(proc: &MeasurementProcess, psi: &QState) -> Result<f64> {
    let start = proc.initial_state(psi)?;
    Ok(proc.epsilon_residual_vec(&start)?.norm())
}
