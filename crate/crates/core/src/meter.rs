//! Meter functions `f(X)` and the least-squares unbiasing problem.
//!
//! Writing `f(X) = sum_k f_k E_k` over the meter's spectral projectors, the
//! unbiasedness deficit `<xi| f(X)(t) - x(t) |xi>` is `sum_k f_k Pi_k - T`,
//! linear in the real coefficients `f_k`. Whether some `f` removes it is an
//! ordinary real least-squares problem in the Frobenius norm.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, Observable, QState, Units};
use crate::povm::{extract_povm, MeterFrame, RotatedImage};
use crate::process::{MeasurementProcess, Rms};

/// Real function on the meter spectrum, in length units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum MeterFunction {
    /// `(m_k, f(m_k))` pairs, one per eigenvalue cluster.
    Tabulated { table: Vec<(f64, f64)> },
    /// `a * m + b`.
    Affine { a: f64, b: f64 },
    /// `c[0] + c[1] m + c[2] m^2 + ...`.
    Polynomial { coefficients: Vec<f64> },
}

impl MeterFunction {
    pub fn identity() -> Self {
        Self::Affine { a: 1.0, b: 0.0 }
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Self::Affine { a, b }
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        Self::Polynomial { coefficients }
    }

    pub fn tabulated(table: Vec<(f64, f64)>) -> Self {
        Self::Tabulated { table }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Affine { a, b } if *a == 1.0 && *b == 0.0)
    }

    /// Value at `m`; a tabulated function must have an entry within `abs_tol`.
    pub fn value_at(&self, m: f64, abs_tol: f64) -> Option<f64> {
        match self {
            Self::Affine { a, b } => Some(a * m + b),
            Self::Polynomial { coefficients } => {
                Some(coefficients.iter().rev().fold(0.0, |acc, c| acc * m + c))
            }
            Self::Tabulated { table } => table
                .iter()
                .map(|&(key, val)| ((key - m).abs(), val))
                .filter(|&(d, _)| d <= abs_tol)
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, val)| val),
        }
    }

    /// Values on each cluster value, or the first uncovered cluster.
    pub fn on_clusters(&self, cluster_values: &[f64], abs_tol: f64) -> Result<Vec<f64>> {
        cluster_values
            .iter()
            .map(|&m| self.value_at(m, abs_tol).ok_or(Error::UndefinedFunction { value: m }))
            .collect()
    }

    pub fn to_tabulated(&self, cluster_values: &[f64], abs_tol: f64) -> Result<Self> {
        let values = self.on_clusters(cluster_values, abs_tol)?;
        Ok(Self::tabulated(cluster_values.iter().copied().zip(values).collect()))
    }

    /// Parse `identity`, `affine:A,B` or `poly:C0,C1,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let numbers = |body: &str| -> Result<Vec<f64>> {
            body.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number {s:?} in meter function")))
                })
                .collect()
        };
        match spec.split_once(':') {
            None if spec == "identity" => Ok(Self::identity()),
            Some(("affine", body)) => match numbers(body)?.as_slice() {
                [a, b] => Ok(Self::affine(*a, *b)),
                _ => Err(Error::Config(format!("affine needs two numbers, got {body:?}"))),
            },
            Some(("poly", body)) => Ok(Self::polynomial(numbers(body)?)),
            _ => Err(Error::Config(format!(
                "unknown meter function {spec:?}; expected identity, affine:A,B or poly:C0,C1,..."
            ))),
        }
    }
}

/// POVM elements, their outcome values and the target `<xi| x(t) |xi>`.
#[derive(Debug, Clone)]
pub struct DeficitComponents {
    pub values: Vec<f64>,
    pub basis: Vec<Observable>,
    pub target: Observable,
}

impl DeficitComponents {
    /// `sum_k f_k Pi_k`.
    pub fn combine(&self, coefficients: &[f64]) -> CMatrix {
        assert_eq!(coefficients.len(), self.basis.len());
        let n = self.target.dim();
        let mut acc = CMatrix::zeros(n, n);
        for (c, b) in coefficients.iter().zip(&self.basis) {
            acc += b.matrix().map(|z| z * *c);
        }
        acc
    }

    /// `sum_k f_k Pi_k - T`.
    pub fn deficit(&self, coefficients: &[f64]) -> Observable {
        Observable::hermitian_part(self.combine(coefficients) - self.target.matrix(), Units::Length)
    }
}

pub fn deficit_components(proc: &MeasurementProcess) -> Result<DeficitComponents> {
    let povm = extract_povm(proc);
    let frame = MeterFrame::of(proc);
    let shifted = frame.with_object_op(proc.measured().matrix());
    let target = Observable::hermitian_part(frame.gram(&shifted, frame.all_rows(), None), Units::Length);
    let (values, basis) = povm.outcomes.into_iter().map(|o| (o.value, o.element)).unzip();
    Ok(DeficitComponents { values, basis, target })
}

/// Real least-squares design for `min |sum_k f_k B_k - T|_F`.
///
/// Hermitian matrices are packed as their diagonal plus the real and
/// imaginary parts of the strict upper triangle scaled by `sqrt(2)`, which
/// preserves the Frobenius inner product.
pub(crate) fn hermitian_design(basis: &[Observable], target: &Observable) -> (DMatrix<f64>, DVector<f64>) {
    let n = target.dim();
    let rows = n * n;
    let pack = |m: &CMatrix| -> DVector<f64> {
        let mut v = DVector::zeros(rows);
        let mut r = 0;
        for i in 0..n {
            v[r] = m[(i, i)].re;
            r += 1;
        }
        for i in 0..n {
            for j in i + 1..n {
                v[r] = std::f64::consts::SQRT_2 * m[(i, j)].re;
                v[r + 1] = std::f64::consts::SQRT_2 * m[(i, j)].im;
                r += 2;
            }
        }
        v
    };
    let mut a = DMatrix::zeros(rows, basis.len());
    for (k, b) in basis.iter().enumerate() {
        a.set_column(k, &pack(b.matrix()));
    }
    (a, pack(target.matrix()))
}

/// Minimum-norm least-squares solution via SVD, discarding singular values
/// below `cutoff` times the largest. Also returns an orthonormal basis of
/// the discarded directions (the numerical null space) as columns.
pub(crate) fn min_norm_lstsq(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    cutoff: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let k = a.ncols();
    // pad so the thin SVD yields a full right basis
    let a = if a.nrows() < k {
        let mut padded = DMatrix::zeros(k, k);
        padded.rows_mut(0, a.nrows()).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let mut b_full = DVector::zeros(a.nrows());
    b_full.rows_mut(0, b.len()).copy_from(b);

    let svd = SVD::new(a, true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let eps = cutoff * smax;

    let mut x = DVector::zeros(k);
    let mut null = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let vi = v_t.row(i).transpose();
        if s > eps && s > 0.0 {
            let coeff = u.column(i).dot(&b_full) / s;
            x += vi * coeff;
        } else {
            null.push(vi);
        }
    }
    let null = if null.is_empty() {
        DMatrix::zeros(k, 0)
    } else {
        DMatrix::from_columns(&null)
    };
    (x, null)
}

/// Result of [`solve_unbiased_f`].
#[derive(Debug, Clone)]
pub struct UnbiasedSolution {
    pub f_star: MeterFunction,
    pub coefficients: Vec<f64>,
    /// Frobenius norm of `deficit_op`.
    pub residual: f64,
    pub deficit_op: Observable,
    /// `residual <= feasibility * diam(x)`.
    pub feasible: bool,
}

fn tabulate(values: &[f64], coefficients: &[f64]) -> MeterFunction {
    MeterFunction::tabulated(values.iter().copied().zip(coefficients.iter().copied()).collect())
}

/// Meter function closest to satisfying the unbiasedness condition.
pub fn solve_unbiased_f(proc: &MeasurementProcess) -> Result<UnbiasedSolution> {
    let comps = deficit_components(proc)?;
    Ok(solve_components(proc, &comps))
}

fn solve_components(proc: &MeasurementProcess, comps: &DeficitComponents) -> UnbiasedSolution {
    let (a, b) = hermitian_design(&comps.basis, &comps.target);
    let (x, _) = min_norm_lstsq(&a, &b, proc.tolerances().pinv_cutoff);
    let coefficients: Vec<f64> = x.iter().copied().collect();
    let deficit_op = comps.deficit(&coefficients);
    let residual = deficit_op.matrix().norm();
    let diameter = proc.measured().spectrum(proc.tolerances().cluster).diameter();
    UnbiasedSolution {
        f_star: tabulate(&comps.values, &coefficients),
        feasible: residual <= proc.tolerances().feasibility * diameter,
        coefficients,
        residual,
        deficit_op,
    }
}

/// `delta_f^2 = f^T G f - 2 f^T h + c` for tabulated `f` in a fixed state.
///
/// `G` is diagonal: the evolved meter projectors are mutually orthogonal, so
/// only the outcome probabilities `G_kk = <E_k(t)>` survive.
#[derive(Debug, Clone)]
pub struct DeltaQuadratic {
    pub values: Vec<f64>,
    pub g_diag: Vec<f64>,
    pub h: Vec<f64>,
    pub c: f64,
}

impl DeltaQuadratic {
    pub fn value(&self, f: &[f64]) -> f64 {
        f.iter()
            .zip(self.g_diag.iter().zip(&self.h))
            .fold(self.c, |q, (&fk, (&g, &h))| q + fk * fk * g - 2.0 * fk * h)
    }

    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        (0..f.len()).map(|k| 2.0 * (self.g_diag[k] * f[k] - self.h[k])).collect()
    }
}

pub fn delta_quadratic(proc: &MeasurementProcess, psi: &QState) -> Result<DeltaQuadratic> {
    let start = proc.initial_state(psi)?;
    let after = proc.interaction().apply(&start);
    let rotated = RotatedImage::of_vector(proc, &after);
    let with_x = rotated.coeffs() * proc.measured().matrix().transpose();
    let spectrum = proc.meter_spectrum();
    let mut g_diag = Vec::with_capacity(spectrum.clusters.len());
    let mut h = Vec::with_capacity(spectrum.clusters.len());
    for c in &spectrum.clusters {
        let rows = rotated.coeffs().rows(c.start, c.len);
        let rows_x = with_x.rows(c.start, c.len);
        g_diag.push(rows.norm_squared());
        h.push(rows.dotc(&rows_x).re);
    }
    Ok(DeltaQuadratic { values: spectrum.cluster_values(), g_diag, h, c: with_x.norm_squared() })
}

/// Result of [`min_delta_f`] and [`min_delta_unbiased_f`].
#[derive(Debug, Clone)]
pub struct MinDelta {
    pub f_star: MeterFunction,
    pub coefficients: Vec<f64>,
    pub delta_min: Rms,
}

fn clamp_mean_square(q: f64, tol: f64) -> Result<Rms> {
    if q < -tol {
        return Err(Error::InconsistentMoments(q));
    }
    let ms = q.max(0.0);
    Ok(Rms { value: ms.sqrt(), mean_square: ms })
}

/// Meter function minimizing `delta` in the state `|psi, xi>`.
pub fn min_delta_f(proc: &MeasurementProcess, psi: &QState) -> Result<MinDelta> {
    let quad = delta_quadratic(proc, psi)?;
    let gmax = quad.g_diag.iter().cloned().fold(0.0, f64::max);
    let eps = proc.tolerances().pinv_cutoff * gmax;
    let coefficients: Vec<f64> = quad
        .g_diag
        .iter()
        .zip(&quad.h)
        .map(|(&g, &h)| if g > eps && g > 0.0 { h / g } else { 0.0 })
        .collect();
    Ok(MinDelta {
        f_star: tabulate(&quad.values, &coefficients),
        delta_min: clamp_mean_square(quad.value(&coefficients), proc.tolerances().radicand)?,
        coefficients,
    })
}

/// Meter function minimizing `delta` among the least-squares solutions of
/// the unbiasedness problem (the unbiased ones whenever those exist).
pub fn min_delta_unbiased_f(proc: &MeasurementProcess, psi: &QState) -> Result<(MinDelta, UnbiasedSolution)> {
    let comps = deficit_components(proc)?;
    let quad = delta_quadratic(proc, psi)?;
    let cutoff = proc.tolerances().pinv_cutoff;
    let (a, b) = hermitian_design(&comps.basis, &comps.target);
    let (f0, null) = min_norm_lstsq(&a, &b, cutoff);

    let g = DMatrix::from_diagonal(&DVector::from_vec(quad.g_diag.clone()));
    let h = DVector::from_vec(quad.h.clone());
    let mut f = f0.clone();
    if null.ncols() > 0 {
        // minimize over f0 + N z: (N^T G N) z = N^T (h - G f0)
        let reduced = null.transpose() * &g * &null;
        let rhs = null.transpose() * (&h - &g * &f0);
        let (z, _) = min_norm_lstsq(&reduced, &rhs, cutoff);
        f += &null * z;
    }
    let coefficients: Vec<f64> = f.iter().copied().collect();
    let deficit_op = comps.deficit(&coefficients);
    let residual = deficit_op.matrix().norm();
    let diameter = proc.measured().spectrum(proc.tolerances().cluster).diameter();
    let solution = UnbiasedSolution {
        f_star: tabulate(&comps.values, &coefficients),
        coefficients: coefficients.clone(),
        feasible: residual <= proc.tolerances().feasibility * diameter,
        residual,
        deficit_op,
    };
    let best = MinDelta {
        f_star: solution.f_star.clone(),
        delta_min: clamp_mean_square(quad.value(&coefficients), proc.tolerances().radicand)?,
        coefficients,
    };
    Ok((best, solution))
}
