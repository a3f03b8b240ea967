//! Effective POVM elements, average scores and the ideal strategy.
//!
//! Subsystems are ordered `(A0, A, B, B0)`. Alice's element acts on
//! `(A0, A)`, the shared state on `(A, B)` and Bob's element on `(B, B0)`, so
//! `I (x) rho (x) I` and `M_A (x) M_B` line up without permutation. The
//! contraction
//!
//! ```text
//! M~[(i0,ib),(j0,jb)] = sum rho[(a,b),(a',b')] M_A[(i0,a'),(j0,a)] M_B[(b',ib),(b,jb)]
//! ```
//!
//! is `Tr_AB[(I (x) rho (x) I)(M_A (x) M_B)]` written out in indices. The same
//! kernel serves the swap game, where the roles of states and measurements
//! are exchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlin::{schmidt, tensor, CMatrix, KetVector, Operator, SubsystemShape, C64, TOL};
use crate::witness::{
    build_certification_witness, decompose_witness, InputEnsemble, ScoreTable, Witness, A0, B0,
};

pub(crate) const A: &str = "A";
pub(crate) const B: &str = "B";

/// Dimensions of the four subsystems in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub outer_left: usize,
    pub inner_left: usize,
    pub inner_right: usize,
    pub outer_right: usize,
}

impl Dims {
    pub const QUBITS: Dims = Dims {
        outer_left: 2,
        inner_left: 2,
        inner_right: 2,
        outer_right: 2,
    };
}

/// Which factor of the contraction a see-saw step optimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    /// Operator on the inner pair `(A, B)`.
    Middle,
    /// Operator on `(A0, A)`.
    Left,
    /// Operator on `(B, B0)`.
    Right,
}

/// Contracts `middle` on `(A,B)` against `left` on `(A0,A)` and `right` on
/// `(B,B0)`, returning the operator on `(A0,B0)`.
pub fn contract(dims: Dims, left: &CMatrix, middle: &CMatrix, right: &CMatrix) -> CMatrix {
    let Dims {
        outer_left: d0,
        inner_left: da,
        inner_right: db,
        outer_right: d1,
    } = dims;
    // Stage 1: X[(i0,j0),(b,b')] = sum_{a,a'} middle[(a,b),(a',b')] left[(i0,a'),(j0,a)].
    let mut x = CMatrix::zeros(d0 * d0, db * db);
    for i0 in 0..d0 {
        for j0 in 0..d0 {
            for a in 0..da {
                for ap in 0..da {
                    let l = left[(i0 * da + ap, j0 * da + a)];
                    if l == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for b in 0..db {
                        for bp in 0..db {
                            x[(i0 * d0 + j0, b * db + bp)] += middle[(a * db + b, ap * db + bp)] * l;
                        }
                    }
                }
            }
        }
    }
    // Stage 2: out[(i0,ib),(j0,jb)] = sum_{b,b'} X[(i0,j0),(b,b')] right[(b',ib),(b,jb)].
    let mut out = CMatrix::zeros(d0 * d1, d0 * d1);
    for i0 in 0..d0 {
        for j0 in 0..d0 {
            for b in 0..db {
                for bp in 0..db {
                    let xv = x[(i0 * d0 + j0, b * db + bp)];
                    if xv == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for ib in 0..d1 {
                        for jb in 0..d1 {
                            out[(i0 * d1 + ib, j0 * d1 + jb)] += xv * right[(bp * d1 + ib, b * d1 + jb)];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Operator `E` on the slot's space with `Tr[E X] = Tr[score · contract(..)]`
/// when `X` replaces that slot's factor. The other two factors are taken
/// from the arguments; the slot's own argument is ignored.
pub fn environment(
    dims: Dims,
    slot: Slot,
    score: &CMatrix,
    left: &CMatrix,
    middle: &CMatrix,
    right: &CMatrix,
) -> CMatrix {
    let Dims {
        outer_left: d0,
        inner_left: da,
        inner_right: db,
        outer_right: d1,
    } = dims;
    let (rows, cols) = match slot {
        Slot::Middle => (da * db, da * db),
        Slot::Left => (d0 * da, d0 * da),
        Slot::Right => (db * d1, db * d1),
    };
    let mut env = CMatrix::zeros(rows, cols);
    for i0 in 0..d0 {
        for j0 in 0..d0 {
            for ib in 0..d1 {
                for jb in 0..d1 {
                    let w = score[(j0 * d1 + jb, i0 * d1 + ib)];
                    if w == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for a in 0..da {
                        for ap in 0..da {
                            for b in 0..db {
                                for bp in 0..db {
                                    let (m_idx, l_idx, r_idx) = (
                                        (a * db + b, ap * db + bp),
                                        (i0 * da + ap, j0 * da + a),
                                        (bp * d1 + ib, b * d1 + jb),
                                    );
                                    match slot {
                                        Slot::Middle => {
                                            env[(ap * db + bp, a * db + b)] +=
                                                w * left[l_idx] * right[r_idx];
                                        }
                                        Slot::Left => {
                                            env[(j0 * da + a, i0 * da + ap)] +=
                                                w * middle[m_idx] * right[r_idx];
                                        }
                                        Slot::Right => {
                                            env[(b * d1 + jb, bp * d1 + ib)] +=
                                                w * middle[m_idx] * left[l_idx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    env
}

fn bipartite_dims(op: &Operator, what: &str) -> Result<(usize, usize)> {
    match op.shape().dims() {
        [x, y] => Ok((*x, *y)),
        d => Err(Error::ShapeMismatch(format!(
            "{what} must be bipartite, got dims {d:?}"
        ))),
    }
}

/// Shared state and Alice/Bob measurement elements for outcome `(0, 0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Strategy {
    /// Density operator on `(A, B)`.
    pub rho: Operator,
    /// POVM element on `(A0, A)`.
    pub m_a: Operator,
    /// POVM element on `(B, B0)`.
    pub m_b: Operator,
}

impl Strategy {
    /// Relabels the operators canonically and checks density / POVM-element
    /// constraints (PSD within 1e-10, unit trace, at most identity).
    pub fn new(rho: Operator, m_a: Operator, m_b: Operator) -> Result<Self> {
        let s = Strategy::unchecked(rho, m_a, m_b)?;
        let slack = TOL.spectral;
        if !s.rho.is_hermitian() || !s.m_a.is_hermitian() || !s.m_b.is_hermitian() {
            return Err(Error::InvalidArgument("strategy operators must be Hermitian".into()));
        }
        if !s.rho.is_psd(slack)? || (s.rho.real_trace() - 1.0).abs() > slack {
            return Err(Error::InvalidArgument("rho is not a density operator".into()));
        }
        for (m, name) in [(&s.m_a, "m_a"), (&s.m_b, "m_b")] {
            let spec = crate::qlin::eig_hermitian(m)?;
            if spec.eigenvalues[0] > 1.0 + slack || *spec.eigenvalues.last().unwrap() < -slack {
                return Err(Error::InvalidArgument(format!(
                    "{name} is not a POVM element (spectrum outside [0, 1])"
                )));
            }
        }
        Ok(s)
    }

    /// Relabels and checks dimensions only.
    pub fn unchecked(rho: Operator, m_a: Operator, m_b: Operator) -> Result<Self> {
        let (da, db) = bipartite_dims(&rho, "rho")?;
        let (_, da2) = bipartite_dims(&m_a, "m_a")?;
        let (db2, _) = bipartite_dims(&m_b, "m_b")?;
        if da != da2 || db != db2 {
            return Err(Error::ShapeMismatch(format!(
                "rho dims ({da},{db}) vs measurement inner dims ({da2},{db2})"
            )));
        }
        Ok(Strategy {
            rho: rho.relabel(&[A, B])?,
            m_a: m_a.relabel(&[A0, A])?,
            m_b: m_b.relabel(&[B, B0])?,
        })
    }

    pub fn dims(&self) -> Dims {
        let a = self.m_a.shape().dims();
        let b = self.m_b.shape().dims();
        Dims {
            outer_left: a[0],
            inner_left: a[1],
            inner_right: b[0],
            outer_right: b[1],
        }
    }
}

/// Sub-normalised operator on `(A0, B0)` seen by the referee for one outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveElement {
    pub operator: Operator,
    /// `Tr(operator)`.
    pub weight: f64,
}

impl EffectiveElement {
    pub fn from_matrix(m: CMatrix, shape: SubsystemShape) -> Result<Self> {
        let operator = Operator::new(m, shape)?;
        let weight = operator.real_trace();
        Ok(EffectiveElement { operator, weight })
    }

    /// PSD within 1e-10 and at most identity.
    pub fn is_valid(&self) -> bool {
        let spec = match crate::qlin::eig_hermitian(&self.operator) {
            Ok(s) => s,
            Err(_) => return false,
        };
        *spec.eigenvalues.last().unwrap() >= -TOL.spectral && spec.eigenvalues[0] <= 1.0 + TOL.spectral
    }
}

/// `Tr_AB[(I (x) rho (x) I)(M_A (x) M_B)]`.
pub fn effective_element(s: &Strategy) -> Result<EffectiveElement> {
    let dims = s.dims();
    let m = contract(dims, s.m_a.matrix(), s.rho.matrix(), s.m_b.matrix());
    let shape = SubsystemShape::new(vec![dims.outer_left, dims.outer_right], [A0, B0])?;
    EffectiveElement::from_matrix(m, shape)
}

/// Witness, its input decomposition and the target's Schmidt angle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemiQuantumGame {
    pub witness: Witness,
    pub scores: ScoreTable,
    pub target_chi: f64,
}

impl SemiQuantumGame {
    /// Checks that the score table reconstructs the witness within 1e-9.
    pub fn new(witness: Witness, scores: ScoreTable) -> Result<Self> {
        let residual = scores.reconstruct().frobenius_distance(&witness.operator);
        if residual > TOL.reconstruction {
            return Err(Error::InvalidArgument(format!(
                "score table does not reconstruct the witness (residual {residual:.3e})"
            )));
        }
        let target_chi = schmidt(&witness.target, &[A0])?.angle;
        Ok(SemiQuantumGame {
            witness,
            scores,
            target_chi,
        })
    }

    /// Builds the witness for `psi1` and decomposes it over the ensembles.
    pub fn design(
        psi1: &KetVector,
        penalty: f64,
        l1: f64,
        ens_a: &InputEnsemble,
        ens_b: &InputEnsemble,
    ) -> Result<Self> {
        let witness = build_certification_witness(psi1, penalty, l1)?;
        let scores = decompose_witness(&witness.operator, ens_a, ens_b)?;
        SemiQuantumGame::new(witness, scores)
    }

    pub fn l1(&self) -> f64 {
        self.witness.l1
    }
}

/// Score through the inputs: `sum_{x,y} beta^{x,y} Tr[(psi_x (x) rho (x) psi_y)(M_A (x) M_B)]`
/// over the full four-party space.
pub fn score_from_inputs(g: &SemiQuantumGame, s: &Strategy) -> Result<f64> {
    let dims = s.dims();
    if dims.outer_left != 2 || dims.outer_right != 2 {
        return Err(Error::ShapeMismatch("game inputs are qubits".into()));
    }
    let meas = tensor(&[&s.m_a, &s.m_b])?;
    let mut total = 0.0;
    for (x, sa) in g.scores.ensemble_a.states.iter().enumerate() {
        let sa = sa.relabel(&[A0])?;
        for (y, sb) in g.scores.ensemble_b.states.iter().enumerate() {
            let beta = g.scores.beta[x][y];
            if beta == 0.0 {
                continue;
            }
            let sb = sb.relabel(&[B0])?;
            let prep = tensor(&[&sa, &s.rho, &sb])?;
            total += beta * prep.trace_product(&meas)?.re;
        }
    }
    Ok(total)
}

/// Effective-element route: `Tr[W M~]`.
pub fn score_from_effective(g: &SemiQuantumGame, s: &Strategy) -> Result<f64> {
    let m = effective_element(s)?;
    Ok(g.witness.operator.trace_product(&m.operator)?.re)
}

/// Average score for outcome `(0, 0)`. Both routes are evaluated and must
/// agree within 1e-10 (relative to the witness scale).
pub fn score(g: &SemiQuantumGame, s: &Strategy) -> Result<f64> {
    let via_inputs = score_from_inputs(g, s)?;
    let via_effective = score_from_effective(g, s)?;
    let scale = 1.0 + g.witness.l_negative.max(g.witness.l1);
    if (via_inputs - via_effective).abs() > TOL.spectral * scale {
        return Err(Error::InvalidArgument(format!(
            "score routes disagree: inputs {via_inputs} vs effective {via_effective}"
        )));
    }
    Ok(via_inputs)
}

/// `|Phi+> = (|00> + |11>)/sqrt 2` on the given labels.
pub fn phi_plus(labels: [&str; 2]) -> KetVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    KetVector::from_real(&[s, 0.0, 0.0, s], SubsystemShape::qubits(&labels).expect("distinct"))
        .expect("unit")
}

/// `rho = (|psi1><psi1|)^T`, `M_A = M_B = |Phi+><Phi+|`.
pub fn ideal_strategy(psi1: &KetVector) -> Result<Strategy> {
    if psi1.shape().dims() != [2, 2] {
        return Err(Error::ShapeMismatch("ideal strategy needs a two-qubit target".into()));
    }
    let rho = psi1.projector().transpose().relabel(&[A, B])?;
    Strategy::new(
        rho,
        phi_plus([A0, A]).projector(),
        phi_plus([B, B0]).projector(),
    )
}
