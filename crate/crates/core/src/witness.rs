//! Score operators for the certification game and their decomposition into
//! trusted qubit inputs with real score coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlin::{
    c, cr, fix_phase, schmidt, tensor, CMatrix, CVector, KetVector, Operator, Spectrum,
    SubsystemShape, TOL,
};

pub const DEFAULT_L1: f64 = 1.0;
pub const DEFAULT_PENALTY: f64 = 100.0;
/// Minimum `L / l1` before a witness is flagged as weakly dominated.
pub const DOMINANCE_RATIO: f64 = 100.0;
/// Targets with Schmidt angle at or below this are treated as product states.
pub const ENTANGLEMENT_FLOOR: f64 = 1e-6;

pub(crate) const A0: &str = "A0";
pub(crate) const B0: &str = "B0";

pub(crate) fn input_shape() -> SubsystemShape {
    SubsystemShape::qubits(&[A0, B0]).expect("static labels")
}

/// Relabels a two-qubit vector onto `(A0, B0)` and checks that it is an
/// entangled unit vector. Returns the relabelled vector and its Schmidt angle.
pub(crate) fn entangled_target(psi: &KetVector) -> Result<(KetVector, f64)> {
    if psi.shape().dims() != [2, 2] {
        return Err(Error::ShapeMismatch(format!(
            "target must be two qubits, got dims {:?}",
            psi.shape().dims()
        )));
    }
    let psi = KetVector::new(psi.amplitudes().clone(), input_shape())?;
    let angle = schmidt(&psi, &[A0])?.angle;
    if angle <= ENTANGLEMENT_FLOOR {
        return Err(Error::NotEntangled(angle));
    }
    Ok((psi, angle))
}

/// `(l1 + L)|psi><psi| - L I` on a two-qubit space.
pub(crate) fn penalised_projector(psi: &KetVector, l1: f64, penalty: f64) -> Operator {
    let p = psi.projector().into_matrix();
    let n = p.nrows();
    let m = p.map(|z| z * (l1 + penalty)) - CMatrix::identity(n, n).map(|z| z * penalty);
    Operator::new(m, psi.shape().clone()).expect("square by construction")
}

/// Orthonormal completion of `first` by Gram-Schmidt over computational basis
/// vectors in index order.
pub(crate) fn complete_basis(first: &KetVector) -> Vec<KetVector> {
    let n = first.amplitudes().len();
    let mut basis: Vec<CVector> = vec![first.amplitudes().clone()];
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = CVector::zeros(n);
        v[k] = cr(1.0);
        for b in &basis {
            let proj = b.dotc(&v);
            v -= b.map(|z| z * proj);
        }
        let norm = v.norm();
        // Some remaining basis vector always keeps residual >= 1/2.
        if norm > 0.25 {
            v.apply(|z| *z /= norm);
            fix_phase(&mut v);
            basis.push(v);
        }
    }
    debug_assert_eq!(basis.len(), n);
    basis
        .into_iter()
        .map(|a| KetVector::new(a, first.shape().clone()).expect("orthonormal by construction"))
        .collect()
}

/// Score operator with one positive eigenvalue on the target and a common
/// negative eigenvalue `-L` on its complement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub operator: Operator,
    pub spectrum: Spectrum,
    pub target: KetVector,
    pub l1: f64,
    /// Magnitude `L` of the three negative eigenvalues.
    pub l_negative: f64,
    pub warnings: Vec<String>,
}

impl Witness {
    pub fn target_chi(&self) -> f64 {
        schmidt(&self.target, &[A0]).map(|f| f.angle).unwrap_or(0.0)
    }

    /// Checks eigenvalue ordering `l1 > 0 > l2 >= l3 >= l4`.
    pub fn ordering_holds(&self) -> bool {
        let l = &self.spectrum.eigenvalues;
        l[0] > 0.0 && l[1] < 0.0 && l.windows(2).all(|w| w[0] >= w[1])
    }
}

/// `W = l1 |psi1><psi1| - L (I - |psi1><psi1|)` on `(A0, B0)`.
pub fn build_certification_witness(psi1: &KetVector, penalty: f64, l1: f64) -> Result<Witness> {
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::InvalidArgument(format!("penalty L must be > 0, got {penalty}")));
    }
    if !(l1 > 0.0 && l1.is_finite()) {
        return Err(Error::InvalidArgument(format!("l1 must be > 0, got {l1}")));
    }
    let (target, _) = entangled_target(psi1)?;
    let operator = penalised_projector(&target, l1, penalty);
    let spectrum = Spectrum {
        eigenvalues: vec![l1, -penalty, -penalty, -penalty],
        eigenvectors: complete_basis(&target),
    };
    let mut warnings = Vec::new();
    if penalty / l1 < DOMINANCE_RATIO {
        warnings.push(format!(
            "L/l1 = {:.3} below dominance ratio {DOMINANCE_RATIO}",
            penalty / l1
        ));
    }
    Ok(Witness {
        operator,
        spectrum,
        target,
        l1,
        l_negative: penalty,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleName {
    Tetrahedral,
    Pauli6,
    Custom,
}

/// Trusted single-qubit input states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputEnsemble {
    pub name: EnsembleName,
    /// Qubit density operators (labelled `in`).
    pub states: Vec<Operator>,
}

fn bloch_state(r: [f64; 3]) -> Operator {
    let [x, y, z] = r;
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[
            cr(0.5 * (1.0 + z)),
            c(0.5 * x, -0.5 * y),
            c(0.5 * x, 0.5 * y),
            cr(0.5 * (1.0 - z)),
        ],
    );
    Operator::new(m, SubsystemShape::qubits(&["in"]).expect("static")).expect("2x2")
}

fn bloch_vector(rho: &Operator) -> [f64; 4] {
    let m = rho.matrix();
    [
        (m[(0, 0)] + m[(1, 1)]).re,
        (m[(0, 1)] + m[(1, 0)]).re,
        (m[(1, 0)] - m[(0, 1)]).im,
        (m[(0, 0)] - m[(1, 1)]).re,
    ]
}

impl InputEnsemble {
    /// Validates each state as a 2x2 density operator.
    pub fn new(name: EnsembleName, states: Vec<Operator>) -> Result<Self> {
        let shape = SubsystemShape::qubits(&["in"])?;
        let mut out = Vec::with_capacity(states.len());
        for s in states {
            if s.dim() != 2 {
                return Err(Error::ShapeMismatch("input states must be qubits".into()));
            }
            let s = Operator::new(s.into_matrix(), shape.clone())?;
            if !s.is_hermitian() || (s.real_trace() - 1.0).abs() > TOL.structural || !s.is_psd(TOL.spectral)? {
                return Err(Error::InvalidArgument(
                    "input state is not a density operator".into(),
                ));
            }
            out.push(s);
        }
        Ok(InputEnsemble { name, states: out })
    }

    /// Rank of the Gram matrix of the states' Bloch 4-vectors `(1, x, y, z)`.
    pub fn gram_rank(&self) -> usize {
        let rows: Vec<[f64; 4]> = self.states.iter().map(bloch_vector).collect();
        let b = DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]);
        let gram = &b * b.transpose();
        let sv = gram.singular_values();
        let scale = sv.max().max(1.0);
        sv.iter().filter(|&&s| s > 1e-10 * scale).count()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Four pure states with tetrahedral Bloch vectors.
pub fn tetrahedral_states() -> InputEnsemble {
    let s = 1.0 / 3f64.sqrt();
    let states = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]]
        .into_iter()
        .map(bloch_state)
        .collect();
    InputEnsemble {
        name: EnsembleName::Tetrahedral,
        states,
    }
}

/// Eigenstates of the three Pauli operators.
pub fn pauli6_states() -> InputEnsemble {
    let states = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
    .into_iter()
    .map(bloch_state)
    .collect();
    InputEnsemble {
        name: EnsembleName::Pauli6,
        states,
    }
}

/// Score coefficients `beta[x][y]` attached to input pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    pub beta: Vec<Vec<f64>>,
    pub ensemble_a: InputEnsemble,
    pub ensemble_b: InputEnsemble,
    /// Frobenius residual of the reconstruction against the source operator.
    pub residual: f64,
}

fn input_pair(a: &Operator, b: &Operator) -> Operator {
    let a = a.relabel(&[A0]).expect("qubit");
    let b = b.relabel(&[B0]).expect("qubit");
    tensor(&[&a, &b]).expect("distinct labels")
}

impl ScoreTable {
    /// `sum_{x,y} beta[x][y] psi_x (x) psi_y` on `(A0, B0)`.
    pub fn reconstruct(&self) -> Operator {
        let mut m = CMatrix::zeros(4, 4);
        for (x, sa) in self.ensemble_a.states.iter().enumerate() {
            for (y, sb) in self.ensemble_b.states.iter().enumerate() {
                m += input_pair(sa, sb).matrix().map(|z| z * self.beta[x][y]);
            }
        }
        Operator::new(m, input_shape()).expect("4x4")
    }
}

/// Solves `W = sum beta^{x,y} psi_x (x) psi_y` for real `beta`, taking the
/// minimum-norm least-squares solution when the system is overdetermined.
pub fn decompose_witness(
    w: &Operator,
    ens_a: &InputEnsemble,
    ens_b: &InputEnsemble,
) -> Result<ScoreTable> {
    if w.dim() != 4 {
        return Err(Error::ShapeMismatch("witness must act on two qubits".into()));
    }
    if !w.is_hermitian() {
        return Err(Error::NotHermitian(w.hermitian_deviation()));
    }
    for e in [ens_a, ens_b] {
        let rank = e.gram_rank();
        if rank < 4 {
            return Err(Error::IncompleteEnsemble { rank });
        }
    }
    let (na, nb) = (ens_a.len(), ens_b.len());
    // Real and imaginary parts of the 16 matrix entries stacked.
    let mut design = DMatrix::<f64>::zeros(32, na * nb);
    for (x, sa) in ens_a.states.iter().enumerate() {
        for (y, sb) in ens_b.states.iter().enumerate() {
            let p = input_pair(sa, sb);
            for (k, z) in p.matrix().iter().enumerate() {
                design[(k, x * nb + y)] = z.re;
                design[(16 + k, x * nb + y)] = z.im;
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(32);
    for (k, z) in w.matrix().iter().enumerate() {
        rhs[k] = z.re;
        rhs[16 + k] = z.im;
    }
    let svd = design.svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    let sol = svd
        .solve(&rhs, cutoff)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let beta: Vec<Vec<f64>> = (0..na)
        .map(|x| (0..nb).map(|y| sol[x * nb + y]).collect())
        .collect();
    let mut table = ScoreTable {
        beta,
        ensemble_a: ens_a.clone(),
        ensemble_b: ens_b.clone(),
        residual: 0.0,
    };
    let w0 = w.relabel(&[A0, B0])?;
    table.residual = table.reconstruct().frobenius_distance(&w0);
    Ok(table)
}
