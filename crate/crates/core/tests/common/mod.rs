//! Independent oracles shared by the integration tests. They only use dense
//! composite matrices and never call the vector-route code they check.

#![allow(dead_code)]

use edrlab::hilbert::{conjugate, embed, partial_inner, CMatrix, C64};
use edrlab::{MeasurementProcess, MeterFunction, Observable, QState, Slot, Units};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `<psi, xi| A^2 |psi, xi>` for a dense composite `A`.
pub fn dense_mean_square(proc: &MeasurementProcess, psi: &QState, a: &CMatrix) -> f64 {
    let v = edrlab::hilbert::tensor_state(psi, proc.probe_state()).into_amplitudes();
    let av = a * &v;
    v.dotc(&(a * av)).re
}

/// Dense `U^dag (I (x) f(X)) U - x (x) I`, `U^dag (I (x) f(X)) U - U^dag (x (x) I) U`
/// and `U^dag (p (x) I) U - p (x) I`.
pub struct DenseDifferences {
    pub eps: CMatrix,
    pub delta: CMatrix,
    pub eta: CMatrix,
}

pub fn dense_differences(proc: &MeasurementProcess, f: &MeterFunction) -> DenseDifferences {
    let dims = proc.dims();
    let u = proc.interaction().to_dense();
    let heis = |op: &CMatrix| u.adjoint() * op * &u;
    let fx = edrlab::hilbert::apply_function(proc.meter(), f).unwrap();
    let x_t = heis(embed(proc.meter(), Slot::Probe, dims).unwrap().matrix());
    let fx_t = heis(embed(&fx, Slot::Probe, dims).unwrap().matrix());
    let x0 = embed(proc.measured(), Slot::Object, dims).unwrap().matrix().clone();
    let p0 = embed(proc.disturbed(), Slot::Object, dims).unwrap().matrix().clone();
    DenseDifferences {
        eps: &x_t - &x0,
        delta: fx_t - heis(&x0),
        eta: heis(&p0) - p0,
    }
}

/// Indicator of meter cluster `k` as a tabulated meter function.
pub fn indicator(proc: &MeasurementProcess, k: usize) -> MeterFunction {
    let values = proc.meter_spectrum().cluster_values();
    MeterFunction::tabulated(
        values.iter().enumerate().map(|(j, &v)| (v, if j == k { 1.0 } else { 0.0 })).collect(),
    )
}

/// POVM elements by dense conjugation and contraction.
pub fn dense_povm(proc: &MeasurementProcess) -> Vec<CMatrix> {
    let k = proc.meter_spectrum().clusters.len();
    (0..k)
        .map(|j| {
            let evolved = proc.meter_evolved(&indicator(proc, j)).unwrap();
            partial_inner(proc.probe_state(), &evolved, proc.dims()).unwrap().matrix().clone()
        })
        .collect()
}

/// `<xi| x(t) |xi>` by dense conjugation and contraction.
pub fn dense_target(proc: &MeasurementProcess) -> CMatrix {
    let x0 = embed(proc.measured(), Slot::Object, proc.dims()).unwrap();
    let x_t = conjugate(proc.interaction(), &x0).unwrap();
    partial_inner(proc.probe_state(), &x_t, proc.dims()).unwrap().matrix().clone()
}

/// Least squares `min |sum f_k B_k - T|_F` through the real normal equations
/// `Re tr(B_j B_k) f = Re tr(B_k T)`, solved with an eigenvalue pseudo-inverse.
/// Returns `(f, residual)`.
pub fn normal_equations_lstsq(basis: &[CMatrix], target: &CMatrix) -> (Vec<f64>, f64) {
    let k = basis.len();
    let gram = DMatrix::from_fn(k, k, |i, j| (basis[i].adjoint() * &basis[j]).trace().re);
    let rhs = DVector::from_fn(k, |i, _| (basis[i].adjoint() * target).trace().re);
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut f = DVector::zeros(k);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-13 * top {
            let v = eig.eigenvectors.column(i);
            f += v * (v.dot(&rhs) / lam);
        }
    }
    let mut combo = -target.clone();
    for (c, b) in f.iter().zip(basis) {
        combo += b * C64::new(*c, 0.0);
    }
    (f.iter().copied().collect(), combo.norm())
}

/// Standard deviation of `a` in `psi` via `<a^2> - <a>^2`.
pub fn variance(psi: &QState, a: &Observable) -> f64 {
    let v = psi.amplitudes();
    let av = a.matrix() * v;
    let mean = v.dotc(&av).re;
    av.norm_squared() - mean * mean
}

pub fn mean(psi: &QState, a: &Observable) -> f64 {
    edrlab::hilbert::expectation(psi, a).unwrap()
}

pub fn length_observable(m: CMatrix) -> Observable {
    Observable::new(m, Units::Length).unwrap()
}
