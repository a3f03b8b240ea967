//! Dense complex linear algebra over small labelled tensor-product spaces.
//!
//! Every matrix or vector carries a [`SubsystemShape`]: an ordered list of
//! subsystem dimensions and distinct labels. The basis of the full space is
//! lexicographic over the subsystems in declared order, so for labels
//! `[A0, A]` with dims `[2, 2]` the flat index is `2 * i_A0 + i_A`. All
//! contractions in the crate are written against this ordering.
//!
//! Numerical thresholds live in [`TOL`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Numeric policy shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Exact-structure checks: Hermiticity, normalisation, trace preservation.
    pub structural: f64,
    /// Spectral checks: orthonormality, eigen-sums, PSD slack.
    pub spectral: f64,
    /// Reconstruction residuals (Frobenius).
    pub reconstruction: f64,
}

pub const TOL: Tolerances = Tolerances {
    structural: 1e-12,
    spectral: 1e-10,
    reconstruction: 1e-9,
};

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Ordered subsystem dimensions and their labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct SubsystemShape {
    dims: Vec<usize>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl TryFrom<ShapeRepr> for SubsystemShape {
    type Error = Error;
    fn try_from(r: ShapeRepr) -> Result<Self> {
        SubsystemShape::new(r.dims, r.labels)
    }
}

impl From<SubsystemShape> for ShapeRepr {
    fn from(s: SubsystemShape) -> Self {
        ShapeRepr {
            dims: s.dims,
            labels: s.labels,
        }
    }
}

impl SubsystemShape {
    pub fn new<S: Into<String>>(dims: Vec<usize>, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if dims.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} dims for {} labels",
                dims.len(),
                labels.len()
            )));
        }
        if dims.is_empty() {
            return Err(Error::ShapeMismatch("no subsystems".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::ShapeMismatch(format!("subsystem dimension {d}")));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::LabelCollision(l.clone()));
            }
        }
        Ok(SubsystemShape { dims, labels })
    }

    /// All-qubit shape with the given labels.
    pub fn qubits(labels: &[&str]) -> Result<Self> {
        SubsystemShape::new(vec![2; labels.len()], labels.iter().copied())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Side length of the full space.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.position(label)?])
    }

    pub fn concat(&self, other: &SubsystemShape) -> Result<SubsystemShape> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let labels = self.labels.iter().chain(other.labels.iter()).cloned();
        SubsystemShape::new(dims, labels)
    }

    /// Same dimensions under new labels.
    pub fn relabel(&self, labels: &[&str]) -> Result<SubsystemShape> {
        SubsystemShape::new(self.dims.clone(), labels.iter().copied())
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }

    fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            out[k] = index % self.dims[k];
            index /= self.dims[k];
        }
        out
    }
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Complex square matrix on a labelled tensor-product space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    shape: SubsystemShape,
    hermitian: bool,
}

impl Operator {
    /// Wraps a matrix; the Hermitian flag is set when the matrix is Hermitian
    /// within the structural tolerance.
    pub fn new(matrix: CMatrix, shape: SubsystemShape) -> Result<Self> {
        let n = shape.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix for shape of side {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let hermitian = hermitian_deviation(&matrix) <= TOL.structural;
        Ok(Operator {
            matrix,
            shape,
            hermitian,
        })
    }

    /// Like [`Operator::new`] but rejects non-Hermitian input.
    pub fn hermitian(matrix: CMatrix, shape: SubsystemShape) -> Result<Self> {
        let dev = hermitian_deviation(&matrix);
        let op = Operator::new(matrix, shape)?;
        if !op.hermitian {
            return Err(Error::NotHermitian(dev));
        }
        Ok(op)
    }

    pub fn from_real(rows: &[&[f64]], shape: SubsystemShape) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Operator::new(CMatrix::from_fn(n, n, |i, j| cr(rows[i][j])), shape)
    }

    pub fn identity(shape: SubsystemShape) -> Self {
        let n = shape.total_dim();
        Operator {
            matrix: CMatrix::identity(n, n),
            shape,
            hermitian: true,
        }
    }

    pub fn zeros(shape: SubsystemShape) -> Self {
        let n = shape.total_dim();
        Operator {
            matrix: CMatrix::zeros(n, n),
            shape,
            hermitian: true,
        }
    }

    /// `|v><v|`.
    pub fn projector(v: &KetVector) -> Self {
        let a = &v.amplitudes;
        Operator {
            matrix: a * a.adjoint(),
            shape: v.shape.clone(),
            hermitian: true,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn shape(&self) -> &SubsystemShape {
        &self.shape
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Real part of the trace.
    pub fn real_trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.matrix)
    }

    pub fn dagger(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            shape: self.shape.clone(),
            hermitian: self.hermitian,
        }
    }

    /// Full transpose in the computational basis.
    pub fn transpose(&self) -> Operator {
        Operator {
            matrix: self.matrix.transpose(),
            shape: self.shape.clone(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator {
            matrix: self.matrix.map(|z| z * s),
            shape: self.shape.clone(),
            hermitian: self.hermitian,
        }
    }

    fn same_shape(&self, other: &Operator) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape.labels, other.shape.labels
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.same_shape(other)?;
        Operator::new(&self.matrix + &other.matrix, self.shape.clone())
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.same_shape(other)?;
        Operator::new(&self.matrix - &other.matrix, self.shape.clone())
    }

    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        self.same_shape(other)?;
        Operator::new(&self.matrix * &other.matrix, self.shape.clone())
    }

    /// `Tr[self · other]`.
    pub fn trace_product(&self, other: &Operator) -> Result<C64> {
        self.same_shape(other)?;
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.matrix[(i, k)] * other.matrix[(k, i)];
            }
        }
        Ok(acc)
    }

    /// `<v| self |v>`.
    pub fn expectation(&self, v: &KetVector) -> Result<C64> {
        if self.shape.total_dim() != v.shape.total_dim() {
            return Err(Error::ShapeMismatch("operator/vector sides differ".into()));
        }
        Ok(v.amplitudes.dotc(&(&self.matrix * &v.amplitudes)))
    }

    pub fn frobenius_distance(&self, other: &Operator) -> f64 {
        (&self.matrix - &other.matrix).norm()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Same matrix under new labels (dimensions must be unchanged).
    pub fn relabel(&self, labels: &[&str]) -> Result<Operator> {
        Ok(Operator {
            matrix: self.matrix.clone(),
            shape: self.shape.relabel(labels)?,
            hermitian: self.hermitian,
        })
    }

    /// `U · self · U†`.
    pub fn conjugate_by(&self, u: &Operator) -> Result<Operator> {
        if u.dim() != self.dim() {
            return Err(Error::ShapeMismatch("unitary side differs".into()));
        }
        Operator::new(&u.matrix * &self.matrix * u.matrix.adjoint(), self.shape.clone())
    }

    /// Smallest eigenvalue; requires the Hermitian flag.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(*eig_hermitian(self)?.eigenvalues.last().expect("non-empty spectrum"))
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(eig_hermitian(self)?.eigenvalues[0])
    }

    /// Hermitian part `(X + X†)/2`, flagged Hermitian.
    pub fn hermitian_part(&self) -> Operator {
        Operator {
            matrix: (&self.matrix + self.matrix.adjoint()).map(|z| z * 0.5),
            shape: self.shape.clone(),
            hermitian: true,
        }
    }

    /// Positive semidefinite within `slack` (min eigenvalue >= -slack).
    pub fn is_psd(&self, slack: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -slack)
    }
}

/// Whether a vector is normalised or allowed to carry norm below one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Unit,
    Subnormalized,
}

/// Pure (possibly sub-normalised) vector on a labelled space.
#[derive(Debug, Clone, PartialEq)]
pub struct KetVector {
    amplitudes: CVector,
    shape: SubsystemShape,
    norm_kind: NormKind,
}

impl KetVector {
    /// Unit vector; rejects norms off by more than the structural tolerance.
    pub fn new(amplitudes: CVector, shape: SubsystemShape) -> Result<Self> {
        Self::check_len(&amplitudes, &shape)?;
        let n = amplitudes.norm();
        if (n - 1.0).abs() > TOL.structural {
            return Err(Error::InvalidArgument(format!("unit vector has norm {n}")));
        }
        Ok(KetVector {
            amplitudes,
            shape,
            norm_kind: NormKind::Unit,
        })
    }

    pub fn subnormalized(amplitudes: CVector, shape: SubsystemShape) -> Result<Self> {
        Self::check_len(&amplitudes, &shape)?;
        let n = amplitudes.norm();
        if n > 1.0 + TOL.structural {
            return Err(Error::InvalidArgument(format!(
                "sub-normalised vector has norm {n}"
            )));
        }
        Ok(KetVector {
            amplitudes,
            shape,
            norm_kind: NormKind::Subnormalized,
        })
    }

    /// Normalises `amplitudes` first.
    pub fn normalize(amplitudes: CVector, shape: SubsystemShape) -> Result<Self> {
        let n = amplitudes.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalise zero vector".into()));
        }
        KetVector::new(amplitudes.map(|z| z / n), shape)
    }

    pub fn from_real(amps: &[f64], shape: SubsystemShape) -> Result<Self> {
        KetVector::new(CVector::from_iterator(amps.len(), amps.iter().map(|&x| cr(x))), shape)
    }

    pub fn basis(shape: SubsystemShape, index: usize) -> Result<Self> {
        let n = shape.total_dim();
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
        let mut a = CVector::zeros(n);
        a[index] = cr(1.0);
        KetVector::new(a, shape)
    }

    fn check_len(a: &CVector, shape: &SubsystemShape) -> Result<()> {
        if a.len() != shape.total_dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} amplitudes for shape of side {}",
                a.len(),
                shape.total_dim()
            )));
        }
        Ok(())
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn shape(&self) -> &SubsystemShape {
        &self.shape
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm_kind
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &KetVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn projector(&self) -> Operator {
        Operator::projector(self)
    }

    /// Complex conjugate in the computational basis.
    pub fn conj(&self) -> KetVector {
        KetVector {
            amplitudes: self.amplitudes.map(|z| z.conj()),
            shape: self.shape.clone(),
            norm_kind: self.norm_kind,
        }
    }

    pub fn tensor(&self, other: &KetVector) -> Result<KetVector> {
        let shape = self.shape.concat(&other.shape)?;
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        let norm_kind = if self.norm_kind == NormKind::Unit && other.norm_kind == NormKind::Unit {
            NormKind::Unit
        } else {
            NormKind::Subnormalized
        };
        Ok(KetVector {
            amplitudes,
            shape,
            norm_kind,
        })
    }

    /// `op |self>`; the result is normalised only if `op` preserves norm.
    pub fn apply(&self, op: &Operator) -> Result<CVector> {
        if op.dim() != self.amplitudes.len() {
            return Err(Error::ShapeMismatch("operator/vector sides differ".into()));
        }
        Ok(op.matrix() * &self.amplitudes)
    }

    pub fn relabel(&self, labels: &[&str]) -> Result<KetVector> {
        Ok(KetVector {
            amplitudes: self.amplitudes.clone(),
            shape: self.shape.relabel(labels)?,
            norm_kind: self.norm_kind,
        })
    }
}

/// Schmidt coefficients and local bases of a bipartite vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchmidtForm {
    /// Descending, nonnegative.
    pub coefficients: Vec<f64>,
    pub left_basis: Vec<KetVector>,
    pub right_basis: Vec<KetVector>,
    /// `atan2(sqrt(sum_{i>=2} c_i^2), c_1)`; for two coefficients this is the
    /// arccos of the normalised largest coefficient, in `[0, pi/4]`.
    pub angle: f64,
}

impl SchmidtForm {
    /// `sum_i c_i |l_i> (x) |r_i>` on the left-then-right ordering.
    pub fn reconstruct(&self) -> CVector {
        let dl = self.left_basis[0].amplitudes.len();
        let dr = self.right_basis[0].amplitudes.len();
        let mut out = CVector::zeros(dl * dr);
        for (k, &ck) in self.coefficients.iter().enumerate() {
            out += self.left_basis[k]
                .amplitudes
                .kronecker(&self.right_basis[k].amplitudes)
                .map(|z| z * ck);
        }
        out
    }
}

/// Descending eigenvalues with phase-fixed orthonormal eigenvectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<KetVector>,
}

impl Spectrum {
    /// `sum_i lambda_i |v_i><v_i|`.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.eigenvalues.len();
        let mut out = CMatrix::zeros(n, n);
        for (l, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let a = &v.amplitudes;
            out += (a * a.adjoint()).map(|z| z * *l);
        }
        out
    }
}

/// Makes the first component with modulus above 1e-8 real and positive.
pub fn fix_phase(v: &mut CVector) {
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-8).copied() {
        let phase = z.conj() / z.norm();
        v.apply(|x| *x *= phase);
    }
}

/// Kronecker product with concatenated shape.
pub fn tensor(ops: &[&Operator]) -> Result<Operator> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("tensor of no operators".into()))?;
    let mut matrix = first.matrix.clone();
    let mut shape = first.shape.clone();
    let mut hermitian = first.hermitian;
    for op in rest {
        shape = shape.concat(&op.shape)?;
        matrix = matrix.kronecker(&op.matrix);
        hermitian &= op.hermitian;
    }
    Ok(Operator {
        matrix,
        shape,
        hermitian,
    })
}

/// Traces out every subsystem not listed in `keep`. The result keeps the
/// operator's declared subsystem order.
pub fn partial_trace(op: &Operator, keep: &[&str]) -> Result<Operator> {
    if keep.is_empty() {
        return Err(Error::ScalarResult);
    }
    let shape = &op.shape;
    let mut kept = vec![false; shape.len()];
    for label in keep {
        let p = shape.position(label)?;
        if kept[p] {
            return Err(Error::LabelCollision(label.to_string()));
        }
        kept[p] = true;
    }
    let kept_idx: Vec<usize> = (0..shape.len()).filter(|&k| kept[k]).collect();
    let traced_idx: Vec<usize> = (0..shape.len()).filter(|&k| !kept[k]).collect();
    let out_shape = SubsystemShape::new(
        kept_idx.iter().map(|&k| shape.dims[k]).collect(),
        kept_idx.iter().map(|&k| shape.labels[k].clone()),
    )?;
    let strides = shape.strides();
    let offset = |sub: &SubsystemShape, idx: &[usize], flat: usize| -> usize {
        sub.digits(flat)
            .iter()
            .zip(idx)
            .map(|(d, &k)| d * strides[k])
            .sum()
    };
    let traced_shape = if traced_idx.is_empty() {
        None
    } else {
        Some(SubsystemShape::new(
            traced_idx.iter().map(|&k| shape.dims[k]).collect(),
            traced_idx.iter().map(|&k| shape.labels[k].clone()),
        )?)
    };
    let traced_offsets: Vec<usize> = match &traced_shape {
        None => vec![0],
        Some(ts) => (0..ts.total_dim()).map(|t| offset(ts, &traced_idx, t)).collect(),
    };
    let n = out_shape.total_dim();
    let row_offsets: Vec<usize> = (0..n).map(|r| offset(&out_shape, &kept_idx, r)).collect();
    let m = &op.matrix;
    let matrix = CMatrix::from_fn(n, n, |r, c| {
        traced_offsets
            .iter()
            .map(|&t| m[(row_offsets[r] + t, row_offsets[c] + t)])
            .sum()
    });
    Operator::new(matrix, out_shape)
}

/// Transpose on one tensor factor.
pub fn partial_transpose(op: &Operator, subsystem: &str) -> Result<Operator> {
    let shape = &op.shape;
    let p = shape.position(subsystem)?;
    let stride = shape.strides()[p];
    let d = shape.dims[p];
    let n = shape.total_dim();
    let digit = |i: usize| (i / stride) % d;
    let matrix = CMatrix::from_fn(n, n, |r, c| {
        let (dr, dc) = (digit(r), digit(c));
        let r2 = r - dr * stride + dc * stride;
        let c2 = c - dc * stride + dr * stride;
        op.matrix[(r2, c2)]
    });
    Ok(Operator {
        matrix,
        shape: shape.clone(),
        hermitian: op.hermitian,
    })
}

/// Hermitian eigendecomposition: descending eigenvalues, phase-fixed
/// eigenvectors. Degenerate eigenspaces come back in whatever orthonormal
/// basis the (deterministic) solver produces.
pub fn eig_hermitian(op: &Operator) -> Result<Spectrum> {
    if !op.hermitian {
        return Err(Error::NotHermitian(op.hermitian_deviation()));
    }
    let sym = (&op.matrix + op.matrix.adjoint()).map(|z| z * 0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigenvalues = Vec::with_capacity(order.len());
    let mut eigenvectors = Vec::with_capacity(order.len());
    for k in order {
        eigenvalues.push(eig.eigenvalues[k]);
        let mut v: CVector = eig.eigenvectors.column(k).into_owned();
        let n = v.norm();
        v.apply(|z| *z /= n);
        fix_phase(&mut v);
        eigenvectors.push(KetVector {
            amplitudes: v,
            shape: op.shape.clone(),
            norm_kind: NormKind::Unit,
        });
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Schmidt decomposition across the cut `left | rest`. The left factor
/// keeps the declared order of `left` labels within the vector's shape.
pub fn schmidt(v: &KetVector, left: &[&str]) -> Result<SchmidtForm> {
    let shape = &v.shape;
    let mut is_left = vec![false; shape.len()];
    for l in left {
        let p = shape
            .position(l)
            .map_err(|_| Error::InvalidCut(format!("unknown label `{l}`")))?;
        if is_left[p] {
            return Err(Error::InvalidCut(format!("`{l}` listed twice")));
        }
        is_left[p] = true;
    }
    if left.is_empty() || is_left.iter().all(|&b| b) {
        return Err(Error::InvalidCut("one side of the cut is empty".into()));
    }
    let left_idx: Vec<usize> = (0..shape.len()).filter(|&k| is_left[k]).collect();
    let right_idx: Vec<usize> = (0..shape.len()).filter(|&k| !is_left[k]).collect();
    let sub = |idx: &[usize]| {
        SubsystemShape::new(
            idx.iter().map(|&k| shape.dims[k]).collect(),
            idx.iter().map(|&k| shape.labels[k].clone()),
        )
    };
    let (ls, rs) = (sub(&left_idx)?, sub(&right_idx)?);
    let (dl, dr) = (ls.total_dim(), rs.total_dim());
    let strides = shape.strides();
    let flat = |s: &SubsystemShape, idx: &[usize], i: usize| -> usize {
        s.digits(i).iter().zip(idx).map(|(d, &k)| d * strides[k]).sum()
    };
    let amp = &v.amplitudes;
    let m = CMatrix::from_fn(dl, dr, |i, j| {
        amp[flat(&ls, &left_idx, i) + flat(&rs, &right_idx, j)]
    });
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut coefficients = Vec::new();
    let mut left_basis = Vec::new();
    let mut right_basis = Vec::new();
    for k in order {
        coefficients.push(svd.singular_values[k]);
        left_basis.push(KetVector {
            amplitudes: u.column(k).into_owned(),
            shape: ls.clone(),
            norm_kind: NormKind::Unit,
        });
        right_basis.push(KetVector {
            amplitudes: vt.row(k).transpose(),
            shape: rs.clone(),
            norm_kind: NormKind::Unit,
        });
    }
    let tail: f64 = coefficients[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
    let angle = tail.atan2(coefficients[0]);
    Ok(SchmidtForm {
        coefficients,
        left_basis,
        right_basis,
        angle,
    })
}

/// SplitMix64 step; derives independent per-sample seeds from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded source of Haar-random states and unitaries.
pub struct Sampler {
    rng: ChaCha20Rng,
}

impl Sampler {
    pub fn from_seed(seed: u64) -> Self {
        Sampler {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    fn gaussian(&mut self) -> C64 {
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        c(re, im)
    }

    pub fn gaussian_vector(&mut self, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| self.gaussian())
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| self.gaussian())
    }

    /// Haar-random unit vector.
    pub fn ket(&mut self, shape: &SubsystemShape) -> KetVector {
        let mut a = self.gaussian_vector(shape.total_dim());
        let n = a.norm();
        a.apply(|z| *z /= n);
        KetVector {
            amplitudes: a,
            shape: shape.clone(),
            norm_kind: NormKind::Unit,
        }
    }

    /// Haar-random unitary matrix: QR of a Ginibre matrix with the phases of
    /// R's diagonal moved into Q.
    pub fn unitary_matrix(&mut self, dim: usize) -> CMatrix {
        let g = self.gaussian_matrix(dim, dim);
        let qr = g.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for j in 0..dim {
            let d = r[(j, j)];
            let ph = if d.norm() > 0.0 { d / d.norm() } else { cr(1.0) };
            q.column_mut(j).apply(|z| *z *= ph);
        }
        q
    }

    pub fn unitary(&mut self, shape: &SubsystemShape) -> Operator {
        let m = self.unitary_matrix(shape.total_dim());
        Operator {
            matrix: m,
            shape: shape.clone(),
            hermitian: false,
        }
    }

    /// Flat Dirichlet(1, ..., 1) weights.
    pub fn dirichlet(&mut self, k: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..k).map(|_| self.rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    }

    /// `U diag(w) U†` with Dirichlet weights on the first `rank` entries.
    pub fn density(&mut self, shape: &SubsystemShape, rank: usize) -> Result<Operator> {
        let n = shape.total_dim();
        if rank == 0 || rank > n {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} for dimension {n}"
            )));
        }
        let w = self.dirichlet(rank);
        let u = self.unitary_matrix(n);
        Ok(self.density_with_spectrum(shape, &w, &u))
    }

    /// `U diag(w) U†` for the supplied weights (zero-padded).
    pub fn density_with_spectrum(&self, shape: &SubsystemShape, w: &[f64], u: &CMatrix) -> Operator {
        let n = shape.total_dim();
        let d = CMatrix::from_fn(n, n, |i, j| {
            if i == j && i < w.len() {
                cr(w[i])
            } else {
                cr(0.0)
            }
        });
        let m = u * d * u.adjoint();
        let m = (&m + m.adjoint()).map(|z| z * 0.5);
        Operator {
            matrix: m,
            shape: shape.clone(),
            hermitian: true,
        }
    }
}

pub fn random_ket(shape: &SubsystemShape, seed: u64) -> KetVector {
    Sampler::from_seed(seed).ket(shape)
}

pub fn random_density(shape: &SubsystemShape, rank: usize, seed: u64) -> Result<Operator> {
    Sampler::from_seed(seed).density(shape, rank)
}

pub fn random_unitary(shape: &SubsystemShape, seed: u64) -> Operator {
    Sampler::from_seed(seed).unitary(shape)
}

// JSON: complex numbers as [re, im], matrices row-major with shape metadata.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorRepr {
    dims: Vec<usize>,
    labels: Vec<String>,
    data: Vec<Vec<[f64; 2]>>,
}

impl Serialize for Operator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        OperatorRepr {
            dims: self.shape.dims.clone(),
            labels: self.shape.labels.clone(),
            data: (0..n)
                .map(|i| (0..n).map(|j| [self.matrix[(i, j)].re, self.matrix[(i, j)].im]).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = OperatorRepr::deserialize(d)?;
        let shape = SubsystemShape::new(r.dims, r.labels).map_err(D::Error::custom)?;
        let n = r.data.len();
        if r.data.iter().any(|row| row.len() != n) {
            return Err(D::Error::custom("operator data is not square"));
        }
        let m = CMatrix::from_fn(n, n, |i, j| c(r.data[i][j][0], r.data[i][j][1]));
        Operator::new(m, shape).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KetRepr {
    dims: Vec<usize>,
    labels: Vec<String>,
    amplitudes: Vec<[f64; 2]>,
    norm_kind: NormKind,
}

impl Serialize for KetVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        KetRepr {
            dims: self.shape.dims.clone(),
            labels: self.shape.labels.clone(),
            amplitudes: self.amplitudes.iter().map(|z| [z.re, z.im]).collect(),
            norm_kind: self.norm_kind,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KetVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = KetRepr::deserialize(d)?;
        let shape = SubsystemShape::new(r.dims, r.labels).map_err(D::Error::custom)?;
        let a = CVector::from_iterator(r.amplitudes.len(), r.amplitudes.iter().map(|p| c(p[0], p[1])));
        match r.norm_kind {
            NormKind::Unit => KetVector::new(a, shape),
            NormKind::Subnormalized => KetVector::subnormalized(a, shape),
        }
        .map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(labels: &[&str]) -> SubsystemShape {
        SubsystemShape::qubits(labels).unwrap()
    }

    fn phi_plus(labels: &[&str]) -> KetVector {
        let s = 0.5f64.sqrt();
        KetVector::from_real(&[s, 0.0, 0.0, s], q(labels)).unwrap()
    }

    fn pauli_x(label: &str) -> Operator {
        Operator::from_real(&[&[0.0, 1.0], &[1.0, 0.0]], q(&[label])).unwrap()
    }

    #[test]
    fn identity_tensor_identity() {
        let i2a = Operator::identity(q(&["A"]));
        let i2b = Operator::identity(q(&["B"]));
        let t = tensor(&[&i2a, &i2b]).unwrap();
        assert_eq!(t.matrix(), &CMatrix::identity(4, 4));
        assert_eq!(t.shape().labels(), &["A".to_string(), "B".to_string()]);
        assert!(t.is_hermitian());
    }

    #[test]
    fn basis_projectors_tensor() {
        let p0 = KetVector::basis(q(&["A"]), 0).unwrap().projector();
        let p1 = KetVector::basis(q(&["B"]), 1).unwrap().projector();
        let t = tensor(&[&p0, &p1]).unwrap();
        let expect = Operator::from_real(
            &[
                &[0.0, 0.0, 0.0, 0.0],
                &[0.0, 1.0, 0.0, 0.0],
                &[0.0, 0.0, 0.0, 0.0],
                &[0.0, 0.0, 0.0, 0.0],
            ],
            q(&["A", "B"]),
        )
        .unwrap();
        assert_eq!(t, expect);
    }

    #[test]
    fn xx_stabilises_phi_plus() {
        let xx = tensor(&[&pauli_x("A"), &pauli_x("B")]).unwrap();
        let v = phi_plus(&["A", "B"]);
        let w = v.apply(&xx).unwrap();
        assert!((w - v.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn label_collision_rejected() {
        let a = Operator::identity(q(&["A"]));
        assert_eq!(tensor(&[&a, &a]), Err(Error::LabelCollision("A".into())));
    }

    #[test]
    fn partial_trace_examples() {
        let v00 = KetVector::basis(q(&["A", "B"]), 0).unwrap().projector();
        let pa = partial_trace(&v00, &["A"]).unwrap();
        assert_eq!(pa, KetVector::basis(q(&["A"]), 0).unwrap().projector());

        let bell = phi_plus(&["A", "B"]).projector();
        let m = partial_trace(&bell, &["A"]).unwrap();
        assert!(m.frobenius_distance(&Operator::identity(q(&["A"])).scale(0.5)) < 1e-15);
    }

    #[test]
    fn partial_trace_matches_index_contraction() {
        // Tr_A[rho_A (x) rho_B] against an explicit double loop.
        let ra = random_density(&q(&["A"]), 2, 3).unwrap().scale(1.7);
        let rb = random_density(&SubsystemShape::new(vec![3], ["B"]).unwrap(), 3, 4).unwrap();
        let t = tensor(&[&ra, &rb]).unwrap();
        let got = partial_trace(&t, &["B"]).unwrap();
        let m = t.matrix();
        let mut expect = CMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..2 {
                    expect[(i, j)] += m[(a * 3 + i, a * 3 + j)];
                }
            }
        }
        assert!((got.matrix() - &expect).norm() < 1e-14);
        assert!((got.matrix() - rb.matrix().map(|z| z * 1.7)).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_errors() {
        let op = Operator::identity(q(&["A", "B"]));
        assert_eq!(partial_trace(&op, &[]), Err(Error::ScalarResult));
        assert_eq!(
            partial_trace(&op, &["C"]),
            Err(Error::UnknownLabel("C".into()))
        );
    }

    #[test]
    fn partial_trace_keeps_declared_order() {
        let s = SubsystemShape::new(vec![2, 3, 2], ["X", "Y", "Z"]).unwrap();
        let rho = random_density(&s, 4, 9).unwrap();
        let r = partial_trace(&rho, &["Z", "X"]).unwrap();
        assert_eq!(r.shape().labels(), &["X".to_string(), "Z".to_string()]);
        assert!((r.real_trace() - rho.real_trace()).abs() < 1e-12);
    }

    #[test]
    fn partial_transpose_examples() {
        let i4 = Operator::identity(q(&["A", "B"]));
        assert_eq!(partial_transpose(&i4, "B").unwrap(), i4);
        let bell = phi_plus(&["A", "B"]).projector();
        let pt = partial_transpose(&bell, "B").unwrap();
        assert!((pt.min_eigenvalue().unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(
            partial_transpose(&bell, "Q"),
            Err(Error::UnknownLabel("Q".into()))
        );
    }

    #[test]
    fn product_states_stay_ppt() {
        for seed in 0..100 {
            let mut s = Sampler::from_seed(seed);
            let ra = s.density(&q(&["A"]), 2).unwrap();
            let rb = s.density(&q(&["B"]), 2).unwrap();
            let pt = partial_transpose(&tensor(&[&ra, &rb]).unwrap(), "B").unwrap();
            assert!(pt.min_eigenvalue().unwrap() >= -1e-12);
        }
    }

    #[test]
    fn eig_examples() {
        let z = Operator::from_real(&[&[1.0, 0.0], &[0.0, -1.0]], q(&["A"])).unwrap();
        let sp = eig_hermitian(&z).unwrap();
        assert_eq!(sp.eigenvalues, vec![1.0, -1.0]);
        assert!((sp.eigenvectors[0].amplitudes()[0] - cr(1.0)).norm() < 1e-15);
        assert!((sp.eigenvectors[1].amplitudes()[1] - cr(1.0)).norm() < 1e-15);

        let bell = phi_plus(&["A", "B"]).projector();
        let sp = eig_hermitian(&bell).unwrap();
        for (l, e) in sp.eigenvalues.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((l - e).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = Operator::from_real(&[&[0.0, 1.0], &[0.0, 0.0]], q(&["A"])).unwrap();
        assert!(matches!(eig_hermitian(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn eig_phase_convention() {
        let h = random_density(&q(&["A", "B"]), 4, 11).unwrap();
        for v in eig_hermitian(&h).unwrap().eigenvectors {
            let first = v.amplitudes().iter().find(|z| z.norm() > 1e-8).unwrap();
            assert!(first.im.abs() < 1e-14 && first.re > 0.0);
        }
    }

    #[test]
    fn schmidt_examples() {
        let s = 0.5f64.sqrt();
        let f = schmidt(&phi_plus(&["A", "B"]), &["A"]).unwrap();
        assert!((f.coefficients[0] - s).abs() < 1e-15 && (f.coefficients[1] - s).abs() < 1e-15);
        assert!((f.angle - std::f64::consts::FRAC_PI_4).abs() < 1e-15);

        let p = KetVector::basis(q(&["A", "B"]), 0).unwrap();
        let f = schmidt(&p, &["A"]).unwrap();
        assert_eq!(f.coefficients, vec![1.0, 0.0]);
        assert_eq!(f.angle, 0.0);

        // Singular values of the amplitude matrix diag(cos chi, sin chi).
        let chi = std::f64::consts::PI / 6.0;
        let v = KetVector::from_real(&[chi.cos(), 0.0, 0.0, chi.sin()], q(&["A", "B"])).unwrap();
        let f = schmidt(&v, &["A"]).unwrap();
        assert!((f.coefficients[0] - chi.cos()).abs() < 1e-15);
        assert!((f.coefficients[1] - chi.sin()).abs() < 1e-15);
        assert!((f.angle - chi).abs() < 1e-14);
    }

    #[test]
    fn schmidt_bad_cut() {
        let v = phi_plus(&["A", "B"]);
        assert!(matches!(schmidt(&v, &["A", "B"]), Err(Error::InvalidCut(_))));
        assert!(matches!(schmidt(&v, &[]), Err(Error::InvalidCut(_))));
        assert!(matches!(schmidt(&v, &["C"]), Err(Error::InvalidCut(_))));
    }

    #[test]
    fn schmidt_non_prefix_cut_reconstructs_permuted_vector() {
        let s = SubsystemShape::new(vec![2, 3, 2], ["X", "Y", "Z"]).unwrap();
        let v = random_ket(&s, 5);
        let f = schmidt(&v, &["Y"]).unwrap();
        let r = f.reconstruct(); // ordering (Y, X, Z)
        for x in 0..2 {
            for y in 0..3 {
                for z in 0..2 {
                    let orig = v.amplitudes()[x * 6 + y * 2 + z];
                    assert!((r[y * 4 + x * 2 + z] - orig).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn density_rank_one_and_determinism() {
        let s = q(&["A", "B"]);
        let rho = random_density(&s, 1, 42).unwrap();
        let sp = eig_hermitian(&rho).unwrap();
        assert!((sp.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(sp.eigenvalues[1..].iter().all(|l| l.abs() < 1e-12));
        assert_eq!(rho, random_density(&s, 1, 42).unwrap());
        assert_eq!(random_ket(&s, 7), random_ket(&s, 7));
        assert_eq!(random_unitary(&s, 7), random_unitary(&s, 7));
        assert!(random_density(&s, 0, 1).is_err());
        assert!(random_density(&s, 5, 1).is_err());
    }

    #[test]
    fn random_unitaries_are_unitary() {
        let s = SubsystemShape::new(vec![3, 2], ["A", "B"]).unwrap();
        for seed in 0..50 {
            let u = random_unitary(&s, seed);
            let e = u.matrix().adjoint() * u.matrix() - CMatrix::identity(6, 6);
            assert!(e.norm() <= 1e-10);
        }
    }

    #[test]
    fn ket_validation() {
        let s = q(&["A"]);
        assert!(KetVector::from_real(&[1.0, 1.0], s.clone()).is_err());
        assert!(KetVector::subnormalized(CVector::from_element(2, cr(0.5)), s.clone()).is_ok());
        assert!(KetVector::subnormalized(CVector::from_element(2, cr(0.8)), s).is_err());
    }

    #[test]
    fn shape_validation() {
        assert_eq!(
            SubsystemShape::new(vec![2, 2], ["A", "A"]),
            Err(Error::LabelCollision("A".into()))
        );
        assert!(SubsystemShape::new(vec![2], ["A", "B"]).is_err());
        assert!(Operator::new(CMatrix::identity(3, 3), q(&["A"])).is_err());
    }

    #[test]
    fn operator_json_round_trip() {
        let rho = random_density(&q(&["A", "B"]), 3, 1).unwrap();
        let s = serde_json::to_string(&rho).unwrap();
        let back: Operator = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rho);
        let v = random_ket(&q(&["A", "B"]), 2);
        let back: KetVector = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
    }
}
