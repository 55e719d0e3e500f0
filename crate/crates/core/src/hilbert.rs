//! Dense complex linear algebra for object, probe and composite systems.
//!
//! Composite index convention: the object is the slow index, so the basis
//! vector `|a> (x) |j>` sits at position `a * n_probe + j`. Every module relies
//! on this single ordering.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meter::MeterFunction;
use crate::tolerances::Tolerances;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Physical dimension carried alongside an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Length,
    Momentum,
    Dimensionless,
    LengthSquared,
}

impl Units {
    pub fn as_str(self) -> &'static str {
        match self {
            Units::Length => "length",
            Units::Momentum => "momentum",
            Units::Dimensionless => "dimensionless",
            Units::LengthSquared => "length_squared",
        }
    }
}

/// Which factor of the composite space an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Object,
    Probe,
}

/// Object and probe dimensions of a composite system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub object: usize,
    pub probe: usize,
}

impl Dims {
    pub fn new(object: usize, probe: usize) -> Self {
        Self { object, probe }
    }

    pub fn total(&self) -> usize {
        self.object * self.probe
    }

    fn slot(&self, slot: Slot) -> usize {
        match slot {
            Slot::Object => self.object,
            Slot::Probe => self.probe,
        }
    }
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct QState {
    amps: CVector,
}

impl QState {
    /// Wrap amplitudes that are already normalized.
    pub fn new(amps: CVector) -> Result<Self> {
        Self::with_tolerance(amps, &Tolerances::default())
    }

    pub fn with_tolerance(amps: CVector, tol: &Tolerances) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::DimMismatch("state must have dimension >= 1".into()));
        }
        let norm = amps.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > tol.normalization {
            return Err(Error::Unnormalized { norm, bound: tol.normalization });
        }
        Ok(Self { amps })
    }

    /// Normalize arbitrary non-zero amplitudes.
    pub fn normalized(amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Unnormalized { norm, bound: 0.0 });
        }
        Ok(Self { amps: amps.unscale(norm) })
    }

    pub fn from_vec(amps: Vec<C64>) -> Result<Self> {
        Self::new(CVector::from_vec(amps))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dim {dim}");
        let mut amps = CVector::zeros(dim);
        amps[index] = ONE;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amps
    }
}

// ---------------------------------------------------------------------------
// Observables and spectral data
// ---------------------------------------------------------------------------

/// Hermitian operator with a unit tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
    units: Units,
}

impl Observable {
    pub fn new(matrix: CMatrix, units: Units) -> Result<Self> {
        Self::with_tolerance(matrix, units, &Tolerances::default())
    }

    /// Validate Hermiticity, then store the exact Hermitian part.
    pub fn with_tolerance(matrix: CMatrix, units: Units, tol: &Tolerances) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimMismatch(format!(
                "observable matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let deviation = hermiticity_deviation(&matrix);
        let bound = tol.hermiticity * matrix.norm();
        if !(deviation <= bound) {
            return Err(Error::NonHermitian { deviation, bound });
        }
        Ok(Self::hermitian_part(matrix, units))
    }

    /// `(M + M^dag) / 2` without validation, for results that are Hermitian
    /// by construction up to rounding.
    pub(crate) fn hermitian_part(matrix: CMatrix, units: Units) -> Self {
        let sym = (&matrix + matrix.adjoint()).unscale(2.0);
        Self { matrix: sym, units }
    }

    pub fn from_real_diagonal(diag: &[f64], units: Units) -> Self {
        let d = CVector::from_iterator(diag.len(), diag.iter().map(|&v| C64::new(v, 0.0)));
        Self { matrix: CMatrix::from_diagonal(&d), units }
    }

    pub fn identity(dim: usize, units: Units) -> Self {
        Self { matrix: CMatrix::identity(dim, dim), units }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    /// Largest absolute eigenvalue.
    pub fn operator_norm(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        let eig = SymmetricEigen::new(self.matrix.clone());
        eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectrum(0.0).values
    }

    /// Eigendecomposition with clustering of near-degenerate eigenvalues.
    /// `cluster_tol` is relative to the spectral diameter.
    pub fn spectrum(&self, cluster_tol: f64) -> Spectrum {
        Spectrum::of(&self.matrix, cluster_tol)
    }

    /// Operator with the same spectral projectors and eigenvalues passed through `f`.
    pub fn mapped(&self, spectrum: &Spectrum, f: impl Fn(f64) -> f64, units: Units) -> Self {
        let values: Vec<f64> = spectrum.clusters.iter().map(|c| f(c.value)).collect();
        Self::hermitian_part(spectrum.reassemble(&values), units)
    }
}

/// Max entry of `A - A^dag`.
pub(crate) fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// A run of sorted eigenvalues treated as one measured value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    /// Mean of the member eigenvalues.
    pub value: f64,
    pub start: usize,
    pub len: usize,
}

/// Sorted eigendecomposition of a Hermitian matrix with eigenvalue clusters.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
    pub clusters: Vec<Cluster>,
    /// `Some(p)` when column `c` of `vectors` is the standard basis vector `e_{p[c]}`.
    basis_index: Option<Vec<usize>>,
}

impl Spectrum {
    pub fn of(matrix: &CMatrix, cluster_tol: f64) -> Self {
        let n = matrix.nrows();
        let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || matrix[(i, j)] == ZERO));

        let (mut pairs, vectors_raw): (Vec<(f64, usize)>, Option<CMatrix>) = if is_diagonal {
            ((0..n).map(|i| (matrix[(i, i)].re, i)).collect(), None)
        } else {
            let eig = SymmetricEigen::new(matrix.clone());
            (
                eig.eigenvalues.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
                Some(eig.eigenvectors),
            )
        };
        // stable sort keeps the decomposition deterministic under ties
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let (vectors, basis_index) = match vectors_raw {
            None => {
                let mut v = CMatrix::zeros(n, n);
                for (c, &(_, i)) in pairs.iter().enumerate() {
                    v[(i, c)] = ONE;
                }
                (v, Some(pairs.iter().map(|p| p.1).collect()))
            }
            Some(raw) => {
                let mut v = CMatrix::zeros(n, n);
                for (c, &(_, i)) in pairs.iter().enumerate() {
                    v.set_column(c, &raw.column(i));
                }
                (v, None)
            }
        };

        let clusters = cluster_sorted(&values, cluster_tol);
        Self { values, vectors, clusters, basis_index }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Difference between the largest and smallest eigenvalue.
    pub fn diameter(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        }
    }

    pub fn cluster_values(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.value).collect()
    }

    /// Eigenvectors spanning cluster `k`, as columns.
    pub fn cluster_vectors(&self, k: usize) -> CMatrix {
        let c = self.clusters[k];
        self.vectors.columns(c.start, c.len).into_owned()
    }

    /// Spectral projector of cluster `k`.
    pub fn projector(&self, k: usize) -> CMatrix {
        let v = self.cluster_vectors(k);
        &v * v.adjoint()
    }

    /// `sum_k values[k] P_k`.
    pub fn reassemble(&self, cluster_values: &[f64]) -> CMatrix {
        assert_eq!(cluster_values.len(), self.clusters.len());
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for (c, &val) in self.clusters.iter().zip(cluster_values) {
            for col in c.start..c.start + c.len {
                scaled.column_mut(col).scale_mut(val);
            }
        }
        let mut out = CMatrix::zeros(n, n);
        out.gemm(ONE, &scaled, &self.vectors.adjoint(), ZERO);
        out
    }

    /// Per-eigenvector weights expanded from per-cluster values.
    pub(crate) fn expand(&self, cluster_values: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.dim()];
        for (c, &val) in self.clusters.iter().zip(cluster_values) {
            w[c.start..c.start + c.len].fill(val);
        }
        w
    }

    /// True when the eigenvectors are standard basis vectors.
    pub fn is_diagonal(&self) -> bool {
        self.basis_index.is_some()
    }

    /// Apply `V diag(w) V^dag` to each column of `m`, one weight per eigenvector.
    pub(crate) fn apply_weights_columns(&self, w: &[f64], m: &CMatrix) -> CMatrix {
        match &self.basis_index {
            Some(index) => {
                let mut out = CMatrix::zeros(m.nrows(), m.ncols());
                for (c, &row) in index.iter().enumerate() {
                    let wc = w[c];
                    if wc != 0.0 {
                        for col in 0..m.ncols() {
                            out[(row, col)] = m[(row, col)] * wc;
                        }
                    }
                }
                out
            }
            None => {
                let mut coeffs = self.vectors.ad_mul(m);
                for (r, &wr) in w.iter().enumerate() {
                    coeffs.row_mut(r).scale_mut(wr);
                }
                &self.vectors * coeffs
            }
        }
    }

    /// Coefficients of the columns of `m` in the eigenbasis (`V^dag m`).
    pub(crate) fn rotate_in(&self, m: &CMatrix) -> CMatrix {
        match &self.basis_index {
            Some(index) => {
                let mut out = CMatrix::zeros(m.nrows(), m.ncols());
                for (c, &row) in index.iter().enumerate() {
                    out.set_row(c, &m.row(row));
                }
                out
            }
            None => self.vectors.ad_mul(m),
        }
    }
}

fn cluster_sorted(values: &[f64], rel_tol: f64) -> Vec<Cluster> {
    let mut clusters = Vec::new();
    if values.is_empty() {
        return clusters;
    }
    let diameter = values[values.len() - 1] - values[0];
    let gap = rel_tol * diameter;
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > gap {
            let members = &values[start..i];
            let value = members.iter().sum::<f64>() / members.len() as f64;
            clusters.push(Cluster { value, start, len: i - start });
            start = i;
        }
    }
    clusters
}

// ---------------------------------------------------------------------------
// Unitaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Repr {
    Dense(CMatrix),
    /// `U e_i = e_{perm[i]}`.
    Permutation(Vec<usize>),
    /// `sum_a |a><a| (x) B diag(exp(i angles[a, l])) B^dag` with the control
    /// on the slow (object) index.
    Controlled { basis: CMatrix, angles: DMatrix<f64> },
    /// Factors applied first to last.
    Product(Vec<UnitaryOp>),
}

/// Unitary operator. Structured forms keep large grid models cheap to apply;
/// [`UnitaryOp::to_dense`] materializes any of them.
#[derive(Debug, Clone)]
pub struct UnitaryOp {
    dim: usize,
    repr: Repr,
}

impl UnitaryOp {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        Self::from_matrix_with(matrix, &Tolerances::default())
    }

    pub fn from_matrix_with(matrix: CMatrix, tol: &Tolerances) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimMismatch(format!(
                "unitary matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let deviation = unitarity_deviation(&matrix);
        if !(deviation <= tol.unitarity) {
            return Err(Error::NonUnitary { deviation, bound: tol.unitarity });
        }
        Ok(Self { dim: matrix.nrows(), repr: Repr::Dense(matrix) })
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, repr: Repr::Permutation((0..dim).collect()) }
    }

    pub fn permutation(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::NonUnitary { deviation: 1.0, bound: 0.0 });
            }
        }
        Ok(Self { dim: n, repr: Repr::Permutation(perm) })
    }

    /// Exchange of two subsystems of equal dimension `n`.
    pub fn swap(n: usize) -> Self {
        let perm = (0..n * n).map(|i| (i % n) * n + i / n).collect();
        Self { dim: n * n, repr: Repr::Permutation(perm) }
    }

    /// `exp(-i t H)` by exact spectral exponentiation of the Hermitian `h`.
    pub fn exp_hermitian(h: &Observable, t: f64) -> Self {
        let spec = h.spectrum(0.0);
        let phases = CVector::from_iterator(
            spec.dim(),
            spec.values.iter().map(|&v| C64::from_polar(1.0, -t * v)),
        );
        let v = &spec.vectors;
        let scaled = v * CMatrix::from_diagonal(&phases);
        Self { dim: h.dim(), repr: Repr::Dense(scaled * v.adjoint()) }
    }

    /// `exp(-i scale A (x) B)` for an object operator `A` diagonal in the
    /// computational basis (eigenvalues `control_values`) and a probe
    /// operator with eigenvectors `target_basis` and eigenvalues `target_values`.
    pub fn coupling(
        control_values: &[f64],
        target_values: &[f64],
        target_basis: CMatrix,
        scale: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        let nt = target_basis.nrows();
        if target_basis.ncols() != nt || target_values.len() != nt {
            return Err(Error::DimMismatch(format!(
                "target basis {}x{} with {} eigenvalues",
                nt,
                target_basis.ncols(),
                target_values.len()
            )));
        }
        let deviation = unitarity_deviation(&target_basis);
        if !(deviation <= tol.unitarity) {
            return Err(Error::NonUnitary { deviation, bound: tol.unitarity });
        }
        let nc = control_values.len();
        let angles =
            DMatrix::from_fn(nc, nt, |a, l| -scale * control_values[a] * target_values[l]);
        Ok(Self { dim: nc * nt, repr: Repr::Controlled { basis: target_basis, angles } })
    }

    /// `U` followed by `next`.
    pub fn then(self, next: UnitaryOp) -> Result<Self> {
        if self.dim != next.dim {
            return Err(Error::DimMismatch(format!(
                "cannot compose unitaries of dims {} and {}",
                self.dim, next.dim
            )));
        }
        let mut factors = match self.repr {
            Repr::Product(f) => f,
            other => vec![UnitaryOp { dim: self.dim, repr: other }],
        };
        match next.repr {
            Repr::Product(f) => factors.extend(f),
            other => factors.push(UnitaryOp { dim: next.dim, repr: other }),
        }
        Ok(Self { dim: self.dim, repr: Repr::Product(factors) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_dense(&self) -> CMatrix {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Permutation(p) => {
                let mut m = CMatrix::zeros(self.dim, self.dim);
                for (i, &pi) in p.iter().enumerate() {
                    m[(pi, i)] = ONE;
                }
                m
            }
            Repr::Controlled { basis, angles } => {
                let nt = basis.nrows();
                let mut m = CMatrix::zeros(self.dim, self.dim);
                for a in 0..angles.nrows() {
                    let mut scaled = basis.clone();
                    for l in 0..nt {
                        scaled.column_mut(l).scale_mut_complex(C64::from_polar(1.0, angles[(a, l)]));
                    }
                    let block = scaled * basis.adjoint();
                    m.view_mut((a * nt, a * nt), (nt, nt)).copy_from(&block);
                }
                m
            }
            Repr::Product(factors) => {
                let mut m = CMatrix::identity(self.dim, self.dim);
                for f in factors {
                    m = f.to_dense() * m;
                }
                m
            }
        }
    }

    /// `U v`.
    pub fn apply(&self, v: &CVector) -> CVector {
        assert_eq!(v.len(), self.dim, "unitary/vector dimension mismatch");
        match &self.repr {
            Repr::Dense(m) => m * v,
            Repr::Permutation(p) => {
                let mut out = CVector::zeros(self.dim);
                for (i, &pi) in p.iter().enumerate() {
                    out[pi] = v[i];
                }
                out
            }
            Repr::Controlled { basis, angles } => apply_controlled(basis, angles, v, 1.0),
            Repr::Product(factors) => {
                factors.iter().fold(v.clone(), |acc, f| f.apply(&acc))
            }
        }
    }

    /// `U^dag v`.
    pub fn apply_adjoint(&self, v: &CVector) -> CVector {
        assert_eq!(v.len(), self.dim, "unitary/vector dimension mismatch");
        match &self.repr {
            Repr::Dense(m) => m.ad_mul(v),
            Repr::Permutation(p) => CVector::from_iterator(self.dim, p.iter().map(|&pi| v[pi])),
            Repr::Controlled { basis, angles } => apply_controlled(basis, angles, v, -1.0),
            Repr::Product(factors) => {
                factors.iter().rev().fold(v.clone(), |acc, f| f.apply_adjoint(&acc))
            }
        }
    }

    /// Apply `U` to every column.
    pub fn apply_columns(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(m.nrows(), m.ncols());
        for c in 0..m.ncols() {
            out.set_column(c, &self.apply(&m.column(c).into_owned()));
        }
        out
    }

    /// `U (e_b (x) xi)` for every object basis index `b`, split into probe
    /// blocks with exactly-zero blocks dropped.
    pub fn image_of_product_basis(&self, dims: Dims, xi: &CVector) -> Vec<SparseBlocks> {
        assert_eq!(dims.total(), self.dim);
        match &self.repr {
            Repr::Controlled { basis, angles } if basis.nrows() == dims.probe => {
                let coeffs = basis.ad_mul(xi);
                (0..dims.object)
                    .map(|b| {
                        let rotated = CVector::from_fn(dims.probe, |l, _| {
                            coeffs[l] * C64::from_polar(1.0, angles[(b, l)])
                        });
                        vec![(b, basis * rotated)]
                    })
                    .collect()
            }
            _ => (0..dims.object)
                .map(|b| {
                    let mut v = CVector::zeros(dims.total());
                    v.rows_mut(b * dims.probe, dims.probe).copy_from(xi);
                    split_blocks(&self.apply(&v), dims)
                })
                .collect(),
        }
    }
}

/// Nonzero probe blocks `(a, v_a)` of a composite vector `sum_a |a> (x) v_a`.
pub type SparseBlocks = Vec<(usize, CVector)>;

pub fn split_blocks(v: &CVector, dims: Dims) -> SparseBlocks {
    (0..dims.object)
        .filter_map(|a| {
            let block = v.rows(a * dims.probe, dims.probe);
            block.iter().any(|z| *z != ZERO).then(|| (a, block.into_owned()))
        })
        .collect()
}

fn apply_controlled(basis: &CMatrix, angles: &DMatrix<f64>, v: &CVector, sign: f64) -> CVector {
    let nt = basis.nrows();
    let nc = angles.nrows();
    // column a of `segments` is the probe block of control index a
    let segments = CMatrix::from_column_slice(nt, nc, v.as_slice());
    let mut coeffs = basis.ad_mul(&segments);
    for a in 0..nc {
        for l in 0..nt {
            coeffs[(l, a)] *= C64::from_polar(1.0, sign * angles[(a, l)]);
        }
    }
    let out = basis * coeffs;
    CVector::from_column_slice(out.as_slice())
}

/// Frobenius norm of `U U^dag - I`, an upper bound on its operator norm.
pub(crate) fn unitarity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut prod = m * m.adjoint();
    for i in 0..n {
        prod[(i, i)] -= ONE;
    }
    prod.norm()
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// `|a> (x) |b>`, object (first argument) as the slow index.
pub fn tensor_state(a: &QState, b: &QState) -> QState {
    QState { amps: kron_vec(&a.amps, &b.amps) }
}

pub(crate) fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let nb = b.len();
    CVector::from_fn(a.len() * nb, |i, _| a[i / nb] * b[i % nb])
}

/// `op (x) I` or `I (x) op` on the composite space.
pub fn embed(op: &Observable, slot: Slot, dims: Dims) -> Result<Observable> {
    if op.dim() != dims.slot(slot) {
        return Err(Error::DimMismatch(format!(
            "operator of dim {} cannot fill the {:?} slot of dims ({}, {})",
            op.dim(),
            slot,
            dims.object,
            dims.probe
        )));
    }
    let matrix = match slot {
        Slot::Object => op.matrix.kronecker(&CMatrix::identity(dims.probe, dims.probe)),
        Slot::Probe => CMatrix::identity(dims.object, dims.object).kronecker(&op.matrix),
    };
    Ok(Observable { matrix, units: op.units })
}

/// Heisenberg-picture evolution `U^dag O U`.
pub fn conjugate(u: &UnitaryOp, o: &Observable) -> Result<Observable> {
    if u.dim() != o.dim() {
        return Err(Error::DimMismatch(format!(
            "unitary dim {} vs observable dim {}",
            u.dim(),
            o.dim()
        )));
    }
    let ud = u.to_dense();
    let m = ud.ad_mul(&(o.matrix() * &ud));
    Ok(Observable::hermitian_part(m, o.units))
}

/// Contraction over the probe state: `M[a,b] = <a, xi| O |b, xi>`.
pub fn partial_inner(xi: &QState, o: &Observable, dims: Dims) -> Result<Observable> {
    if xi.dim() != dims.probe || o.dim() != dims.total() {
        return Err(Error::DimMismatch(format!(
            "partial inner product needs probe state of dim {} and operator of dim {}, got {} and {}",
            dims.probe,
            dims.total(),
            xi.dim(),
            o.dim()
        )));
    }
    let m = partial_inner_matrix(&xi.amps, o.matrix(), dims);
    Ok(Observable::hermitian_part(m, o.units))
}

pub(crate) fn partial_inner_matrix(xi: &CVector, o: &CMatrix, dims: Dims) -> CMatrix {
    let (no, np) = (dims.object, dims.probe);
    // O (I (x) xi): column b is O |b, xi>
    let mut lifted = CMatrix::zeros(no * np, no);
    for b in 0..no {
        let block = o.columns(b * np, np) * xi;
        lifted.set_column(b, &block);
    }
    CMatrix::from_fn(no, no, |a, b| {
        let mut acc = ZERO;
        for j in 0..np {
            acc += xi[j].conj() * lifted[(a * np + j, b)];
        }
        acc
    })
}

/// `<s|O|s>`, rejecting a non-negligible imaginary part.
pub fn expectation(s: &QState, o: &Observable) -> Result<f64> {
    expectation_with(s, o, &Tolerances::default())
}

pub fn expectation_with(s: &QState, o: &Observable, tol: &Tolerances) -> Result<f64> {
    if s.dim() != o.dim() {
        return Err(Error::DimMismatch(format!(
            "state dim {} vs operator dim {}",
            s.dim(),
            o.dim()
        )));
    }
    let z = s.amps.dotc(&(o.matrix() * &s.amps));
    let bound = tol.imag_expectation * o.matrix().norm().max(f64::MIN_POSITIVE);
    if z.im.abs() > bound {
        return Err(Error::ComplexExpectation { imag: z.im, bound });
    }
    Ok(z.re)
}

/// Spectral calculus `f(O)`; eigenvalues within the cluster tolerance are
/// mapped together.
pub fn apply_function(o: &Observable, f: &MeterFunction) -> Result<Observable> {
    apply_function_with(o, f, &Tolerances::default())
}

pub fn apply_function_with(o: &Observable, f: &MeterFunction, tol: &Tolerances) -> Result<Observable> {
    let spectrum = o.spectrum(tol.cluster);
    let values = f.on_clusters(&spectrum.cluster_values(), cluster_match_tol(&spectrum, tol))?;
    Ok(Observable::hermitian_part(spectrum.reassemble(&values), o.units))
}

/// Absolute tolerance for matching a tabulated value to a cluster.
pub(crate) fn cluster_match_tol(spectrum: &Spectrum, tol: &Tolerances) -> f64 {
    (tol.cluster * spectrum.diameter()).max(1e-300)
}

// ---------------------------------------------------------------------------
// Composite-vector helpers (no composite matrices are formed)
// ---------------------------------------------------------------------------

/// View a composite vector as an `n_probe x n_object` column-major matrix
/// (`M[j, a] = v[a * n_probe + j]`).
pub(crate) fn as_blocks(v: &CVector, dims: Dims) -> CMatrix {
    CMatrix::from_column_slice(dims.probe, dims.object, v.as_slice())
}

pub(crate) fn from_blocks(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// `(A (x) I) v`.
pub(crate) fn apply_object(a: &CMatrix, v: &CVector, dims: Dims) -> CVector {
    from_blocks(&(as_blocks(v, dims) * a.transpose()))
}

/// `(I (x) B) v`.
pub(crate) fn apply_probe(b: &CMatrix, v: &CVector, dims: Dims) -> CVector {
    from_blocks(&(b * as_blocks(v, dims)))
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Haar-random pure state.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> QState {
    let v = CVector::from_fn(dim, |_, _| complex_normal(rng));
    QState::normalized(v).expect("gaussian vector is non-zero with probability one")
}

/// Haar-random unitary (QR of a Ginibre matrix with the phase fix on `R`).
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> UnitaryOp {
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_normal(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for c in 0..dim {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        q.column_mut(c).scale_mut_complex(phase);
    }
    UnitaryOp { dim, repr: Repr::Dense(q) }
}

/// GUE-distributed Hermitian matrix rescaled to unit operator norm.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R, units: Units) -> Observable {
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_normal(rng));
    let h = Observable::hermitian_part(g, units);
    let norm = h.operator_norm();
    Observable { matrix: h.matrix.unscale(norm), units }
}

/// Unitary commuting with `op`: independent Haar-random blocks on each of
/// its eigenvalue clusters.
pub fn random_commuting_unitary<R: Rng + ?Sized>(spectrum: &Spectrum, rng: &mut R) -> UnitaryOp {
    let n = spectrum.dim();
    let mut block = CMatrix::zeros(n, n);
    for c in &spectrum.clusters {
        let local = random_unitary(c.len, rng).to_dense();
        block.view_mut((c.start, c.start), (c.len, c.len)).copy_from(&local);
    }
    let v = &spectrum.vectors;
    UnitaryOp { dim: n, repr: Repr::Dense(v * block * v.adjoint()) }
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: C64);
}

impl<S> ScaleComplex for nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<C64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_complex(&mut self, s: C64) {
        for x in self.iter_mut() {
            *x *= s;
        }
    }
}
