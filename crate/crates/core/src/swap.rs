//! Source-independent entanglement swapping.
//!
//! Two uncharacterised sources emit `rho_A0A` and `rho_BB0`; an
//! uncharacterised joint measurement `{M_i}` acts on `(A, B)`. Outcome `i`
//! leaves the outer pair in the sub-normalised operator
//!
//! ```text
//! rho~_i = Tr_AB[(I (x) M_i (x) I)(rho_A0A (x) rho_BB0)]
//! ```
//!
//! which is the game contraction with states and measurements exchanged:
//! `rho_A0A` takes the place of Alice's element, `M_i` the place of the
//! shared state and `rho_BB0` the place of Bob's element.

use serde::{Deserialize, Serialize};

use crate::certify::{
    lu_equivalent_pure, Factors, Role, SeeSawConfig, SeeSawProblem, SeeSawRun,
};
use crate::error::{Error, Result};
use crate::game::{contract, phi_plus, Dims, EffectiveElement, A, B};
use crate::qlin::{
    c, cr, eig_hermitian, schmidt, CMatrix, KetVector, Operator, Sampler, SubsystemShape, TOL,
};
use crate::witness::{entangled_target, penalised_projector, DEFAULT_PENALTY, A0, B0};

fn require_density(op: &Operator, what: &str) -> Result<()> {
    if !op.is_hermitian()
        || !op.is_psd(TOL.spectral)?
        || (op.real_trace() - 1.0).abs() > TOL.spectral
    {
        return Err(Error::InvalidArgument(format!("{what} is not a density operator")));
    }
    Ok(())
}

fn two_qubit(op: &Operator, labels: [&str; 2], what: &str) -> Result<Operator> {
    if op.shape().dims() != [2, 2] {
        return Err(Error::ShapeMismatch(format!(
            "{what} must be two qubits, got dims {:?}",
            op.shape().dims()
        )));
    }
    op.relabel(&labels)
}

/// Sources and joint POVM of one swapping experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwapInstance {
    pub rho_a0a: Operator,
    pub rho_bb0: Operator,
    pub joint_povm: Vec<Operator>,
}

impl SwapInstance {
    /// Relabels canonically and validates: densities, PSD elements, and
    /// elements summing to the identity within 1e-10.
    pub fn new(rho_a0a: Operator, rho_bb0: Operator, joint_povm: Vec<Operator>) -> Result<Self> {
        let rho_a0a = two_qubit(&rho_a0a, [A0, A], "rho_A0A")?;
        let rho_bb0 = two_qubit(&rho_bb0, [B, B0], "rho_BB0")?;
        require_density(&rho_a0a, "rho_A0A")?;
        require_density(&rho_bb0, "rho_BB0")?;
        if joint_povm.is_empty() {
            return Err(Error::InvalidArgument("empty POVM".into()));
        }
        let mut elements = Vec::with_capacity(joint_povm.len());
        let mut sum = CMatrix::zeros(4, 4);
        for (i, m) in joint_povm.iter().enumerate() {
            let m = two_qubit(m, [A, B], "POVM element")?;
            if !m.is_hermitian() || !m.is_psd(TOL.spectral)? {
                return Err(Error::InvalidArgument(format!("POVM element {i} is not PSD")));
            }
            sum += m.matrix();
            elements.push(m);
        }
        let dev = (sum - CMatrix::identity(4, 4)).norm();
        if dev > TOL.spectral {
            return Err(Error::IncompletePovm(dev));
        }
        Ok(SwapInstance {
            rho_a0a,
            rho_bb0,
            joint_povm: elements,
        })
    }

    /// Bell sources with the Bell-state measurement.
    pub fn ideal() -> Self {
        let phi = phi_plus([A0, A]).projector();
        SwapInstance::new(phi.clone(), phi, bsm_projectors().to_vec()).expect("valid by construction")
    }

    /// Both sources `v |Phi+><Phi+| + (1 - v) I/4`, measured with the BSM.
    pub fn werner(visibility: f64) -> Result<Self> {
        let shape = SubsystemShape::qubits(&[A0, A])?;
        let phi = phi_plus([A0, A]).projector().scale(visibility);
        let noise = Operator::identity(shape).scale((1.0 - visibility) / 4.0);
        let rho = phi.add(&noise)?;
        SwapInstance::new(rho.clone(), rho, bsm_projectors().to_vec())
    }

    /// Random sources of random rank and a random four-outcome POVM
    /// `S^{-1/2} G_i S^{-1/2}` with `S = sum G_i` and Wishart `G_i`.
    pub fn random(seed: u64) -> Self {
        let mut s = Sampler::from_seed(seed);
        let rank = |s: &mut Sampler| 1 + (s.uniform(0.0, 4.0) as usize).min(3);
        let r1 = rank(&mut s);
        let rho_a0a = s.density(&SubsystemShape::qubits(&[A0, A]).unwrap(), r1).unwrap();
        let r2 = rank(&mut s);
        let rho_bb0 = s.density(&SubsystemShape::qubits(&[B, B0]).unwrap(), r2).unwrap();
        let g: Vec<CMatrix> = (0..4)
            .map(|_| {
                let x = s.gaussian_matrix(4, 2);
                &x * x.adjoint()
            })
            .collect();
        let total = g.iter().fold(CMatrix::zeros(4, 4), |acc, x| acc + x);
        let inv_sqrt = matrix_power(&total, -0.5);
        let shape = SubsystemShape::qubits(&[A, B]).unwrap();
        let povm = g
            .iter()
            .map(|x| {
                let m = &inv_sqrt * x * &inv_sqrt;
                Operator::new(m, shape.clone()).unwrap().hermitian_part()
            })
            .collect();
        SwapInstance::new(rho_a0a, rho_bb0, povm).expect("valid by construction")
    }
}

/// `X^p` for a positive definite Hermitian `X`.
fn matrix_power(x: &CMatrix, p: f64) -> CMatrix {
    let n = x.nrows();
    let op = Operator::new(x.clone(), SubsystemShape::new(vec![n], ["x"]).expect("one label"))
        .expect("square")
        .hermitian_part();
    let spec = eig_hermitian(&op).expect("Hermitian");
    let mut out = CMatrix::zeros(n, n);
    for (l, v) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
        let a = v.amplitudes();
        out += (a * a.adjoint()).map(|z| z * l.powf(p));
    }
    out
}

/// `rho~_i` on `(A0, B0)`.
pub fn swap_effective(inst: &SwapInstance, i: usize) -> Result<EffectiveElement> {
    let m = inst.joint_povm.get(i).ok_or(Error::IndexOutOfRange {
        index: i,
        len: inst.joint_povm.len(),
    })?;
    let out = contract(Dims::QUBITS, inst.rho_a0a.matrix(), m.matrix(), inst.rho_bb0.matrix());
    EffectiveElement::from_matrix(out, SubsystemShape::qubits(&[A0, B0])?)
}

/// Score operator `V = |psi><psi| - l (I - |psi><psi|)` on `(A0, B0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwapGame {
    pub v: Operator,
    pub target: KetVector,
    pub penalty: f64,
}

impl SwapGame {
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eig_hermitian(&self.v)?.eigenvalues)
    }
}

pub fn swap_game_operator(psi: &KetVector, penalty: f64) -> Result<SwapGame> {
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::InvalidArgument(format!("penalty l must be > 0, got {penalty}")));
    }
    let (target, _) = entangled_target(psi)?;
    Ok(SwapGame {
        v: penalised_projector(&target, 1.0, penalty),
        target,
        penalty,
    })
}

/// Swap game on `|Phi+>` with the default penalty.
pub fn default_swap_game() -> SwapGame {
    swap_game_operator(&phi_plus([A0, B0]), DEFAULT_PENALTY).expect("entangled")
}

/// `Tr[V rho~_0]`.
pub fn swap_score(g: &SwapGame, inst: &SwapInstance) -> Result<f64> {
    let r = swap_effective(inst, 0)?;
    Ok(g.v.trace_product(&r.operator)?.re)
}

/// See-saw problem over `(rho_A0A, M_1, rho_BB0)`: the sources sit in the
/// outer slots as states and the measurement element in the middle slot as
/// an effect.
pub fn dualize(g: &SwapGame) -> SeeSawProblem {
    SeeSawProblem {
        score: g.v.clone(),
        roles: [Role::State, Role::Effect, Role::State],
    }
}

/// Optimised sources and first measurement element.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwapOptResult {
    pub rho_a0a: Operator,
    pub rho_bb0: Operator,
    pub m1: Operator,
    pub score_trajectory: Vec<f64>,
    pub final_score: f64,
    pub converged: bool,
    pub restart_index: usize,
    pub converged_restarts: usize,
}

impl SwapOptResult {
    fn from_run(run: SeeSawRun, converged_restarts: usize) -> Self {
        SwapOptResult {
            rho_a0a: run.factors.left,
            m1: run.factors.middle,
            rho_bb0: run.factors.right,
            score_trajectory: run.score_trajectory,
            final_score: run.final_score,
            converged: run.converged,
            restart_index: run.restart_index,
            converged_restarts,
        }
    }

    /// Two-outcome instance `{M_1, I - M_1}`.
    pub fn instance(&self) -> Result<SwapInstance> {
        let rest = Operator::identity(self.m1.shape().clone()).sub(&self.m1)?;
        SwapInstance::new(
            self.rho_a0a.clone(),
            self.rho_bb0.clone(),
            vec![self.m1.clone(), rest.hermitian_part()],
        )
    }

    /// Top eigenvector of `M_1`.
    pub fn m1_vector(&self) -> Result<KetVector> {
        Ok(eig_hermitian(&self.m1.hermitian_part())?.eigenvectors[0].clone())
    }
}

pub fn swap_optimize(g: &SwapGame, cfg: &SeeSawConfig) -> Result<SwapOptResult> {
    let out = dualize(g).optimize(cfg)?;
    Ok(SwapOptResult::from_run(out.best, out.converged_restarts))
}

/// Single dual see-saw run from the given sources and element.
pub fn swap_seesaw_from(
    g: &SwapGame,
    rho_a0a: &Operator,
    m1: &Operator,
    rho_bb0: &Operator,
    cfg: &SeeSawConfig,
) -> Result<SwapOptResult> {
    let start = Factors {
        left: rho_a0a.relabel(&[A0, A])?,
        middle: m1.relabel(&[A, B])?,
        right: rho_bb0.relabel(&[B, B0])?,
    };
    let run = dualize(g).run_from(start, cfg, 0)?;
    let c = usize::from(run.converged);
    Ok(SwapOptResult::from_run(run, c))
}

/// Projectors onto `Phi+, Phi-, Psi+, Psi-` on `(A, B)`.
pub fn bsm_projectors() -> [Operator; 4] {
    let h = 0.5;
    let shape = SubsystemShape::qubits(&[A, B]).expect("static labels");
    let make = |rows: [[f64; 4]; 4]| {
        let r: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        Operator::from_real(&r, shape.clone()).expect("4x4")
    };
    [
        make([[h, 0., 0., h], [0., 0., 0., 0.], [0., 0., 0., 0.], [h, 0., 0., h]]),
        make([[h, 0., 0., -h], [0., 0., 0., 0.], [0., 0., 0., 0.], [-h, 0., 0., h]]),
        make([[0., 0., 0., 0.], [0., h, h, 0.], [0., h, h, 0.], [0., 0., 0., 0.]]),
        make([[0., 0., 0., 0.], [0., h, -h, 0.], [0., -h, h, 0.], [0., 0., 0., 0.]]),
    ]
}

pub const BELL_NAMES: [&str; 4] = ["phi_plus", "phi_minus", "psi_plus", "psi_minus"];

fn bell_projectors_outer() -> Vec<Operator> {
    bsm_projectors()
        .iter()
        .map(|p| p.relabel(&[A0, B0]).expect("two labels"))
        .collect()
}

/// Per-outcome data of a Bell-measurement check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeDiagnostics {
    pub index: usize,
    pub probability: f64,
    /// Top eigenvalue of `rho~_i / Tr(rho~_i)`.
    pub purity: f64,
    pub schmidt_coefficients: Vec<f64>,
    /// Nearest Bell projector after alignment.
    pub matched_bell: String,
    pub bell_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub passed: bool,
    pub tol: f64,
    /// `probabilities`, `purity_and_schmidt`, `bell_alignment`.
    pub clauses: Vec<Clause>,
    pub outcomes: Vec<OutcomeDiagnostics>,
    pub u_a0: Operator,
    pub u_b0: Operator,
    pub diagnostics: Vec<String>,
    pub verdict: String,
}

pub const COROLLARY_PASS: &str = "joint measurement is a complete BSM and both sources are Bell states";

/// Hermitian `n.sigma` with the global phase of `x` removed.
fn hermitian_direction(x: &CMatrix) -> CMatrix {
    // Tr(X sigma_k) / 2 for k = x, y, z.
    let m = [
        (x[(0, 1)] + x[(1, 0)]) * 0.5,
        (x[(0, 1)] - x[(1, 0)]) * c(0.0, 0.5),
        (x[(0, 0)] - x[(1, 1)]) * 0.5,
    ];
    let lead = m
        .iter()
        .copied()
        .fold(cr(0.0), |best, z| if z.norm() > best.norm() { z } else { best });
    let phase = if lead.norm() > 0.0 { lead.conj() / lead.norm() } else { cr(1.0) };
    let [nx, ny, nz] = m.map(|z| (z * phase).re);
    CMatrix::from_row_slice(2, 2, &[cr(nz), c(nx, -ny), c(nx, ny), cr(-nz)])
}

fn outer_op(m: CMatrix, label: &str) -> Operator {
    Operator::new(m, SubsystemShape::qubits(&[label]).expect("one label")).expect("2x2")
}

/// Local unitaries `(U_A0, U_B0)` from the Schmidt bases of outcome 0, then a
/// common frame rotation `(W, conj W)` that sends outcome 1 to a `Z`-type and
/// outcome 2 to an `X`-type Bell state.
fn alignment(vectors: &[KetVector]) -> Result<(CMatrix, CMatrix)> {
    let f = schmidt(&vectors[0], &[A0])?;
    let row = |v: &KetVector| v.amplitudes().adjoint();
    let mut ua = CMatrix::zeros(2, 2);
    let mut ub = CMatrix::zeros(2, 2);
    for k in 0..2 {
        ua.set_row(k, &row(&f.left_basis[k]));
        ub.set_row(k, &row(&f.right_basis[k]));
    }
    let local = ua.kronecker(&ub);
    // After the first step outcome k is (X_k (x) I)|Phi+> with X_k = sqrt2 reshape.
    let directions: Vec<CMatrix> = vectors[1..]
        .iter()
        .map(|v| {
            let a = &local * v.amplitudes();
            let x = CMatrix::from_fn(2, 2, |i, j| a[2 * i + j] * std::f64::consts::SQRT_2);
            hermitian_direction(&x)
        })
        .collect();
    let mut w = CMatrix::identity(2, 2);
    if let Some(h1) = directions.first() {
        let spec = eig_hermitian(&outer_op(h1.clone(), A0).hermitian_part())?;
        for k in 0..2 {
            w.set_row(k, &spec.eigenvectors[k].amplitudes().adjoint());
        }
    }
    if let Some(h2) = directions.get(1) {
        let rotated = &w * h2 * w.adjoint();
        let z = rotated[(0, 1)];
        if z.norm() > 1e-12 {
            let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                cr(1.0),
                z.conj() / z.norm(),
            ]));
            w = d.adjoint() * w;
        }
    }
    Ok((&w * ua, w.map(|z| z.conj()) * ub))
}

/// Checks that a four-outcome instance is a Bell-state measurement on Bell sources: uniform
/// outcome probabilities, pure maximally entangled conditional states, and
/// one pair of local unitaries sending all four to distinct Bell states.
pub fn corollary_check(inst: &SwapInstance, tol: f64) -> Result<CorollaryReport> {
    let n = inst.joint_povm.len();
    if n != 4 {
        return Err(Error::InvalidArgument(format!("corollary needs 4 outcomes, got {n}")));
    }
    let sum = inst
        .joint_povm
        .iter()
        .fold(CMatrix::zeros(4, 4), |acc, m| acc + m.matrix());
    let dev = (sum - CMatrix::identity(4, 4)).norm();
    if dev > TOL.spectral {
        return Err(Error::IncompletePovm(dev));
    }

    let mut probs = Vec::new();
    let mut purities = Vec::new();
    let mut coeffs = Vec::new();
    let mut vectors = Vec::new();
    for i in 0..4 {
        let r = swap_effective(inst, i)?;
        probs.push(r.weight);
        let normalised = if r.weight > 0.0 {
            r.operator.scale(1.0 / r.weight)
        } else {
            r.operator.clone()
        };
        let spec = eig_hermitian(&normalised.hermitian_part())?;
        purities.push(spec.eigenvalues[0]);
        let v = spec.eigenvectors[0].clone();
        coeffs.push(schmidt(&v, &[A0])?.coefficients);
        vectors.push(v);
    }

    let (ua, ub) = alignment(&vectors)?;
    let local = ua.kronecker(&ub);
    let bells = bell_projectors_outer();
    let mut matched = Vec::new();
    let mut distances = Vec::new();
    for v in &vectors {
        let a = &local * v.amplitudes();
        let p = Operator::new(&a * a.adjoint(), SubsystemShape::qubits(&[A0, B0])?)?;
        let (best, dist) = bells
            .iter()
            .enumerate()
            .map(|(k, b)| (k, p.frobenius_distance(b)))
            .fold((0, f64::INFINITY), |m, x| if x.1 < m.1 { x } else { m });
        matched.push(best);
        distances.push(dist);
    }

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let prob_ok = probs.iter().all(|p| (p - 0.25).abs() <= tol);
    let pure_ok = purities.iter().all(|p| *p >= 1.0 - tol)
        && coeffs
            .iter()
            .all(|c| c.iter().all(|x| (x - s).abs() <= tol));
    let mut distinct = matched.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let bell_ok = distances.iter().all(|d| *d <= tol) && distinct.len() == 4;

    let mut diagnostics = Vec::new();
    for i in 0..4 {
        if (probs[i] - 0.25).abs() > tol {
            diagnostics.push(format!("outcome {i}: probability {:.12} != 1/4", probs[i]));
        }
        if purities[i] < 1.0 - tol {
            diagnostics.push(format!("outcome {i}: purity {:.12} below 1 - tol", purities[i]));
        }
        if coeffs[i].iter().any(|x| (x - s).abs() > tol) {
            diagnostics.push(format!(
                "outcome {i}: Schmidt coefficients {:?} not maximally entangled",
                coeffs[i]
            ));
        }
        if distances[i] > tol {
            diagnostics.push(format!(
                "outcome {i}: distance {:.3e} to nearest Bell state {}",
                distances[i], BELL_NAMES[matched[i]]
            ));
        }
    }
    if distinct.len() != 4 {
        diagnostics.push("aligned outcomes do not cover all four Bell states".into());
    }

    let passed = prob_ok && pure_ok && bell_ok;
    let outcomes = (0..4)
        .map(|i| OutcomeDiagnostics {
            index: i,
            probability: probs[i],
            purity: purities[i],
            schmidt_coefficients: coeffs[i].clone(),
            matched_bell: BELL_NAMES[matched[i]].to_string(),
            bell_distance: distances[i],
        })
        .collect();
    let clause = |name: &str, passed| Clause {
        name: name.into(),
        passed,
    };
    Ok(CorollaryReport {
        passed,
        tol,
        clauses: vec![
            clause("probabilities", prob_ok),
            clause("purity_and_schmidt", pure_ok),
            clause("bell_alignment", bell_ok),
        ],
        outcomes,
        u_a0: outer_op(ua, A0),
        u_b0: outer_op(ub, B0),
        diagnostics,
        verdict: if passed {
            COROLLARY_PASS.to_string()
        } else {
            "not certified".to_string()
        },
    })
}

/// Whether `M_1`'s top eigenvector has the target's Schmidt coefficients.
pub fn m1_matches_target(opt: &SwapOptResult, g: &SwapGame, tol: f64) -> Result<bool> {
    lu_equivalent_pure(&opt.m1_vector()?, &g.target, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{ideal_strategy, score, SemiQuantumGame};
    use crate::qlin::tensor;
    use crate::witness::tetrahedral_states;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use std::f64::consts::PI;

    fn shape(labels: &[&str]) -> SubsystemShape {
        SubsystemShape::qubits(labels).unwrap()
    }

    fn target(chi: f64) -> KetVector {
        KetVector::from_real(&[chi.cos(), 0.0, 0.0, chi.sin()], shape(&[A0, B0])).unwrap()
    }

    fn ideal_for(psi: &KetVector) -> SwapInstance {
        let m1 = psi.projector().transpose().relabel(&[A, B]).unwrap();
        let rest = Operator::identity(shape(&[A, B])).sub(&m1).unwrap().hermitian_part();
        let phi = phi_plus([A0, A]).projector();
        SwapInstance::new(phi.clone(), phi, vec![m1, rest]).unwrap()
    }

    /// Literal 16-index evaluation of the conditional operator.
    fn naive(inst: &SwapInstance, i: usize) -> CMatrix {
        let full = tensor(&[&inst.rho_a0a, &inst.rho_bb0]).unwrap();
        let id = Operator::identity(shape(&[A0]));
        let id2 = Operator::identity(shape(&[B0]));
        let mid = tensor(&[&id, &inst.joint_povm[i], &id2]).unwrap();
        let prod = mid.matrix() * full.matrix();
        let mut out = CMatrix::zeros(4, 4);
        for i0 in 0..2 {
            for ib in 0..2 {
                for j0 in 0..2 {
                    for jb in 0..2 {
                        for a in 0..2 {
                            for b in 0..2 {
                                let r = 8 * i0 + 4 * a + 2 * b + ib;
                                let col = 8 * j0 + 4 * a + 2 * b + jb;
                                out[(2 * i0 + ib, 2 * j0 + jb)] += prod[(r, col)];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn bsm_projectors_are_complete() {
        let p = bsm_projectors();
        let sum = p.iter().fold(CMatrix::zeros(4, 4), |acc, x| acc + x.matrix());
        assert_eq!(sum, CMatrix::identity(4, 4));
        for i in 0..4 {
            let spec = eig_hermitian(&p[i]).unwrap();
            assert!((spec.eigenvalues[0] - 1.0).abs() < 1e-15);
            assert!(spec.eigenvalues[1].abs() < 1e-15);
            let f = schmidt(&spec.eigenvectors[0], &[A]).unwrap();
            assert!((f.angle - PI / 4.0).abs() < 1e-12);
            for j in 0..4 {
                if i != j {
                    assert_eq!(p[i].matmul(&p[j]).unwrap().frobenius_norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn bell_inputs_give_uniform_outcomes() {
        let inst = SwapInstance::ideal();
        for i in 0..4 {
            let r = swap_effective(&inst, i).unwrap();
            assert!((r.weight - 0.25).abs() < 1e-12);
        }
        assert_eq!(
            swap_effective(&inst, 4).unwrap_err(),
            Error::IndexOutOfRange { index: 4, len: 4 }
        );
    }

    #[test]
    fn product_inputs_with_phi_plus() {
        let zero = Operator::projector(&KetVector::basis(shape(&[A0, A]), 0).unwrap());
        let p = bsm_projectors();
        let rest = Operator::identity(shape(&[A, B])).sub(&p[0]).unwrap();
        let inst = SwapInstance::new(zero.clone(), zero, vec![p[0].clone(), rest]).unwrap();
        let r = swap_effective(&inst, 0).unwrap();
        let mut expected = CMatrix::zeros(4, 4);
        expected[(0, 0)] = cr(0.5);
        assert!((r.operator.matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn trivial_measurement_gives_marginal_product() {
        let mut s = Sampler::from_seed(8);
        let ra = s.density(&shape(&[A0, A]), 3).unwrap();
        let rb = s.density(&shape(&[B, B0]), 2).unwrap();
        let inst = SwapInstance::new(ra.clone(), rb.clone(), vec![Operator::identity(shape(&[A, B]))]).unwrap();
        let r = swap_effective(&inst, 0).unwrap();
        let ma = crate::qlin::partial_trace(&ra, &[A0]).unwrap();
        let mb = crate::qlin::partial_trace(&rb, &[B0]).unwrap();
        let expected = tensor(&[&ma, &mb]).unwrap();
        assert!((r.operator.matrix() - expected.matrix()).norm() < 1e-12);
    }

    #[test]
    fn contraction_matches_naive_oracle() {
        for seed in 0..50 {
            let inst = SwapInstance::random(seed);
            let mut total = 0.0;
            for i in 0..4 {
                let r = swap_effective(&inst, i).unwrap();
                assert!((r.operator.matrix() - naive(&inst, i)).norm() < 1e-12);
                assert!(r.operator.is_psd(1e-10).unwrap());
                total += r.weight;
            }
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn instance_validation() {
        let phi = phi_plus([A0, A]).projector();
        let p = bsm_projectors();
        let err = SwapInstance::new(phi.clone(), phi.clone(), p[..3].to_vec()).unwrap_err();
        assert!(matches!(err, Error::IncompletePovm(_)));
        let bad = phi.scale(2.0);
        assert!(SwapInstance::new(bad, phi.clone(), p.to_vec()).is_err());
        let neg = p[0].scale(-1.0);
        assert!(SwapInstance::new(phi.clone(), phi, vec![neg, p[1].clone()]).is_err());
    }

    #[test]
    fn swap_game_spectrum() {
        let g = default_swap_game();
        let ev = g.eigenvalues().unwrap();
        for (x, y) in ev.iter().zip([1.0, -100.0, -100.0, -100.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((g.v.expectation(&g.target).unwrap().re - 1.0).abs() < 1e-12);
        let prod = KetVector::basis(shape(&[A0, B0]), 0).unwrap();
        assert!(matches!(swap_game_operator(&prod, 100.0), Err(Error::NotEntangled(_))));
        assert!(swap_game_operator(&target(0.3), 0.0).is_err());
    }

    #[test]
    fn ideal_score_and_linearity() {
        for chi in [PI / 4.0, PI / 6.0, PI / 12.0] {
            let psi = target(chi);
            let g = swap_game_operator(&psi, 100.0).unwrap();
            let inst = ideal_for(&psi);
            let s = swap_score(&g, &inst).unwrap();
            assert!((s - 0.25).abs() < 1e-12);
            let r = swap_effective(&inst, 0).unwrap();
            let expected = psi.projector().scale(0.25);
            assert!(r.operator.frobenius_distance(&expected) < 1e-12);
            let half = inst.joint_povm[0].scale(0.5);
            let rest = Operator::identity(shape(&[A, B])).sub(&half).unwrap().hermitian_part();
            let inst2 = SwapInstance::new(inst.rho_a0a.clone(), inst.rho_bb0.clone(), vec![half, rest]).unwrap();
            assert!((swap_score(&g, &inst2).unwrap() - s / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn duality_with_game_pipeline() {
        let psi = phi_plus([A0, B0]);
        let g = swap_game_operator(&psi, 100.0).unwrap();
        let swap = swap_score(&g, &ideal_for(&psi)).unwrap();
        let game = SemiQuantumGame::design(&psi, 100.0, 1.0, &tetrahedral_states(), &tetrahedral_states()).unwrap();
        let via_game = score(&game, &ideal_strategy(&psi).unwrap()).unwrap();
        assert!((swap - via_game).abs() < 1e-12);
        assert!((swap - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dual_seesaw_reaches_quarter() {
        let g = default_swap_game();
        let cfg = SeeSawConfig {
            restarts: 8,
            seed: 2,
            ..Default::default()
        };
        let opt = swap_optimize(&g, &cfg).unwrap();
        assert!((opt.final_score - 0.25).abs() < 1e-6, "{}", opt.final_score);
        assert!(m1_matches_target(&opt, &g, 1e-6).unwrap());
        let inst = opt.instance().unwrap();
        assert!((swap_score(&g, &inst).unwrap() - opt.final_score).abs() < 1e-12);
    }

    #[test]
    fn dual_ideal_is_fixed_point() {
        let psi = target(PI / 4.0);
        let g = swap_game_operator(&psi, 100.0).unwrap();
        let inst = ideal_for(&psi);
        let opt = swap_seesaw_from(
            &g,
            &inst.rho_a0a,
            &inst.joint_povm[0],
            &inst.rho_bb0,
            &SeeSawConfig::default(),
        )
        .unwrap();
        assert!(opt.converged);
        assert!(opt.score_trajectory.len() - 1 <= 2);
        assert!((opt.final_score - 0.25).abs() < 1e-14);
    }

    #[test]
    fn corollary_passes_on_ideal_instance() {
        let rep = corollary_check(&SwapInstance::ideal(), 1e-9).unwrap();
        assert!(rep.passed, "{:?}", rep.diagnostics);
        assert_eq!(rep.verdict, COROLLARY_PASS);
        assert!(rep.clauses.iter().all(|c| c.passed));
        let mut names: Vec<_> = rep.outcomes.iter().map(|o| o.matched_bell.clone()).collect();
        names.sort();
        assert_eq!(names, ["phi_minus", "phi_plus", "psi_minus", "psi_plus"]);
    }

    fn rotated_ideal(seed: u64) -> SwapInstance {
        let mut s = Sampler::from_seed(seed);
        let mut u = |l: &str| s.unitary(&shape(&[l]));
        let (ua0, ua, ub, ub0) = (u(A0), u(A), u(B), u(B0));
        let phi_a = phi_plus([A0, A]).projector();
        let phi_b = phi_plus([B, B0]).projector();
        let rho_a = phi_a.conjugate_by(&tensor(&[&ua0, &ua]).unwrap()).unwrap();
        let rho_b = phi_b.conjugate_by(&tensor(&[&ub, &ub0]).unwrap()).unwrap();
        let uab = tensor(&[&ua, &ub]).unwrap();
        let povm = bsm_projectors()
            .iter()
            .map(|p| p.conjugate_by(&uab).unwrap().hermitian_part())
            .collect();
        SwapInstance::new(rho_a.hermitian_part(), rho_b.hermitian_part(), povm).unwrap()
    }

    #[test]
    fn corollary_is_local_basis_invariant() {
        for seed in 0..50 {
            let rep = corollary_check(&rotated_ideal(seed), 1e-9).unwrap();
            assert!(rep.passed, "seed {seed}: {:?}", rep.diagnostics);
        }
    }

    #[test]
    fn werner_sources_fail_purity() {
        let inst = SwapInstance::werner(0.95).unwrap();
        let rep = corollary_check(&inst, 1e-6).unwrap();
        assert!(!rep.passed);
        assert!(rep.clauses[0].passed);
        assert!(!rep.clauses[1].passed);
        assert!(rep.diagnostics.iter().any(|d| d.contains("purity")));
        // Conditional states are Werner states of visibility 0.95^2.
        let v = 0.95f64 * 0.95;
        for o in &rep.outcomes {
            assert!((o.purity - (v + (1.0 - v) / 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn product_element_fails() {
        let p = bsm_projectors();
        let shape_ab = shape(&[A, B]);
        let p00 = Operator::projector(&KetVector::basis(shape_ab.clone(), 0).unwrap());
        let p11 = Operator::projector(&KetVector::basis(shape_ab, 3).unwrap());
        let phi = phi_plus([A0, A]).projector();
        let inst = SwapInstance::new(phi.clone(), phi, vec![p00, p11, p[2].clone(), p[3].clone()]).unwrap();
        let rep = corollary_check(&inst, 1e-6).unwrap();
        assert!(!rep.passed);
        assert!(!rep.clauses[1].passed);
        assert!(rep.diagnostics.iter().any(|d| d.contains("Schmidt")));
    }

    #[test]
    fn corollary_preconditions() {
        let phi = phi_plus([A0, A]).projector();
        let two = SwapInstance::new(phi.clone(), phi, vec![
            Operator::identity(shape(&[A, B])).scale(0.5),
            Operator::identity(shape(&[A, B])).scale(0.5),
        ])
        .unwrap();
        assert!(matches!(corollary_check(&two, 1e-6), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn instance_round_trips_through_json() {
        let inst = SwapInstance::random(3);
        let json = serde_json::to_string(&inst).unwrap();
        let back: SwapInstance = serde_json::from_str(&json).unwrap();
        assert_eq!(back.joint_povm, inst.joint_povm);
        let rep = corollary_check(&SwapInstance::ideal(), 1e-9).unwrap();
        let back: CorollaryReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(back.clauses, rep.clauses);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn probabilities_sum_to_one(seed in any::<u64>()) {
            let inst = SwapInstance::random(seed);
            let total: f64 = (0..4).map(|i| swap_effective(&inst, i).unwrap().weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn swap_score_is_sound(seed in any::<u64>()) {
            let g = default_swap_game();
            prop_assert!(swap_score(&g, &SwapInstance::random(seed)).unwrap() <= 0.25 + 1e-9);
        }
    }
}
