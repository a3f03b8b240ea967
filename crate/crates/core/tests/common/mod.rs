//! Shared helpers for integration tests: a literal index-loop evaluation of
//! the effective element and seeded strategy sampling.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use sqgame::game::{SemiQuantumGame, Strategy};
use sqgame::qlin::{KetVector, Operator, Sampler, SubsystemShape};
use sqgame::witness::tetrahedral_states;

pub const CHIS: [f64; 4] = [PI / 4.0, PI / 6.0, PI / 12.0, 0.1];

pub fn qubits(labels: &[&str]) -> SubsystemShape {
    SubsystemShape::qubits(labels).unwrap()
}

pub fn target(chi: f64) -> KetVector {
    KetVector::from_real(&[chi.cos(), 0.0, 0.0, chi.sin()], qubits(&["A0", "B0"])).unwrap()
}

pub fn game(chi: f64) -> SemiQuantumGame {
    SemiQuantumGame::design(&target(chi), 100.0, 1.0, &tetrahedral_states(), &tetrahedral_states())
        .unwrap()
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// `Tr_AB[(I (x) rho (x) I)(M_A (x) M_B)]` built as explicit 16x16 matrices
/// over `(A0, A, B, B0)` and traced with nested loops.
pub fn naive_effective(rho: &Operator, m_a: &Operator, m_b: &Operator) -> DMatrix<Complex64> {
    let id = DMatrix::<Complex64>::identity(2, 2);
    let left = kron(&kron(&id, rho.matrix()), &id);
    let right = kron(m_a.matrix(), m_b.matrix());
    let prod = &left * &right;
    let mut out = DMatrix::zeros(4, 4);
    for i0 in 0..2 {
        for ib in 0..2 {
            for j0 in 0..2 {
                for jb in 0..2 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..2 {
                        for b in 0..2 {
                            acc += prod[(8 * i0 + 4 * a + 2 * b + ib, 8 * j0 + 4 * a + 2 * b + jb)];
                        }
                    }
                    out[(2 * i0 + ib, 2 * j0 + jb)] = acc;
                }
            }
        }
    }
    out
}

/// Random strategy: state of random rank, measurement elements with
/// eigenvalues uniform in `[0, 1]` in a Haar-random basis.
pub fn random_strategy(seed: u64) -> Strategy {
    let mut s = Sampler::from_seed(seed);
    let rank = 1 + (s.uniform(0.0, 4.0) as usize).min(3);
    let rho = s.density(&qubits(&["A", "B"]), rank).unwrap();
    let mut element = |labels: &[&str]| {
        let w: Vec<f64> = (0..4).map(|_| s.uniform(0.0, 1.0)).collect();
        let u = s.unitary_matrix(4);
        s.density_with_spectrum(&qubits(labels), &w, &u)
    };
    let m_a = element(&["A0", "A"]);
    let m_b = element(&["B", "B0"]);
    Strategy::new(rho, m_a, m_b).unwrap()
}

/// Random rank-one strategy: pure state and rank-one projectors.
pub fn random_pure_strategy(seed: u64) -> Strategy {
    let mut s = Sampler::from_seed(seed);
    let rho = s.ket(&qubits(&["A", "B"])).projector();
    let m_a = s.ket(&qubits(&["A0", "A"])).projector();
    let m_b = s.ket(&qubits(&["B", "B0"])).projector();
    Strategy::new(rho, m_a, m_b).unwrap()
}
