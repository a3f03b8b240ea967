//! Closed-form score bound, see-saw maximisation and certification verdicts.
//!
//! The see-saw engine works on any three-factor contraction `left ⋅ middle ⋅
//! right` (see [`crate::game::contract`]) scored against a fixed operator on
//! the outer pair. Each factor is either a density operator or a POVM
//! element. The semi-quantum game uses `(M_A, rho, M_B)`; the swapping game
//! uses `(rho_A0A, M_1, rho_BB0)`.

use std::f64::consts::FRAC_PI_4;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    effective_element, environment, contract, Dims, SemiQuantumGame, Slot, Strategy, A, B,
};
use crate::qlin::{
    eig_hermitian, derive_seed, schmidt, CMatrix, KetVector, Operator, Sampler, SchmidtForm,
    SubsystemShape,
};
use crate::witness::{A0, B0};

/// Largest score of a rank-one strategy whose measurement elements have
/// Schmidt angles `alpha`, `beta` and whose effective element is parallel to
/// a target of Schmidt angle `chi`.
pub fn theorem2_bound(alpha: f64, beta: f64, chi: f64) -> Result<f64> {
    if chi == 0.0 {
        return Err(Error::NotEntangled(chi));
    }
    if !(chi > 0.0 && chi <= FRAC_PI_4 + 1e-15) {
        return Err(Error::InvalidArgument(format!("chi must lie in (0, pi/4], got {chi}")));
    }
    let half_pi = 2.0 * FRAC_PI_4;
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=half_pi + 1e-15).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, pi/2], got {v}")));
        }
    }
    let s = alpha.sin().powi(2) * beta.sin().powi(2);
    let c = alpha.cos().powi(2) * beta.cos().powi(2);
    let den = s * chi.cos().powi(2) + c * chi.sin().powi(2);
    assert!(den > 0.0, "denominator vanishes only outside the domain");
    Ok(s * c / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub alpha: f64,
    pub beta: f64,
    pub bound: f64,
}

/// Bound evaluated on an interior grid of `(0, pi/2)^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundScan {
    pub chi: f64,
    pub grid_n: usize,
    /// Grid spacing `pi / (2 grid_n)`.
    pub step: f64,
    /// Sorted by `(alpha, beta)`.
    pub rows: Vec<BoundPoint>,
    pub max: BoundPoint,
}

impl BoundScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,beta,bound\n");
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.alpha, r.beta, r.bound).expect("write to string");
        }
        out
    }
}

/// Evaluates the bound at `alpha, beta = k pi / (2 grid_n)` for
/// `k = 1..grid_n`, the interior nodes of `grid_n` equal intervals. Ties for
/// the maximum go to the first row.
pub fn bound_scan(chi: f64, grid_n: usize) -> Result<BoundScan> {
    if grid_n < 3 {
        return Err(Error::InvalidArgument(format!("grid_n must be >= 3, got {grid_n}")));
    }
    let step = 2.0 * FRAC_PI_4 / grid_n as f64;
    let mut rows = Vec::with_capacity((grid_n - 1) * (grid_n - 1));
    for i in 1..grid_n {
        let alpha = i as f64 * step;
        for j in 1..grid_n {
            let beta = j as f64 * step;
            rows.push(BoundPoint {
                alpha,
                beta,
                bound: theorem2_bound(alpha, beta, chi)?,
            });
        }
    }
    let max = rows
        .iter()
        .copied()
        .fold(rows[0], |m, r| if r.bound > m.bound { r } else { m });
    Ok(BoundScan {
        chi,
        grid_n,
        step,
        rows,
        max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Measurement updates return the top eigenvector projector.
    RankOne,
    /// Measurement updates return the projector onto the positive eigenspace.
    PsdRelaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeeSawConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once a full sweep improves the score by less than this.
    pub tol_score: f64,
    pub mode: UpdateMode,
    pub seed: u64,
}

impl Default for SeeSawConfig {
    fn default() -> Self {
        SeeSawConfig {
            restarts: 32,
            max_iters: 5000,
            tol_score: 1e-15,
            mode: UpdateMode::RankOne,
            seed: 0,
        }
    }
}

impl SeeSawConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.tol_score > 0.0 && self.tol_score.is_finite()) {
            return Err(Error::InvalidArgument("tol_score must be > 0".into()));
        }
        Ok(())
    }
}

/// Constraint set of one contraction factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Unit-trace PSD operator; updated to a top eigenvector projector.
    State,
    /// `0 <= X <= I`; updated according to [`UpdateMode`].
    Effect,
}

/// The three contraction factors, labelled `(A0, A)`, `(A, B)`, `(B, B0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Factors {
    pub left: Operator,
    pub middle: Operator,
    pub right: Operator,
}

impl Factors {
    pub fn get(&self, slot: Slot) -> &Operator {
        match slot {
            Slot::Left => &self.left,
            Slot::Middle => &self.middle,
            Slot::Right => &self.right,
        }
    }

    fn set(&mut self, slot: Slot, op: Operator) {
        match slot {
            Slot::Left => self.left = op,
            Slot::Middle => self.middle = op,
            Slot::Right => self.right = op,
        }
    }
}

/// Outcome of one coordinate update.
#[derive(Debug, Clone)]
pub struct Update {
    pub operator: Operator,
    /// Optimal value of the sub-problem read off the spectrum: the top
    /// eigenvalue, or the sum of positive eigenvalues for relaxed effects.
    pub predicted: f64,
}

/// Maximise `Tr[score ⋅ contract(left, middle, right)]` over the factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeeSawProblem {
    /// Score operator on `(A0, B0)`.
    pub score: Operator,
    pub roles: [Role; 3],
}

const SWEEP: [Slot; 3] = [Slot::Middle, Slot::Left, Slot::Right];

fn slot_index(slot: Slot) -> usize {
    match slot {
        Slot::Left => 0,
        Slot::Middle => 1,
        Slot::Right => 2,
    }
}

fn slot_shape(slot: Slot) -> SubsystemShape {
    let labels = match slot {
        Slot::Left => [A0, A],
        Slot::Middle => [A, B],
        Slot::Right => [B, B0],
    };
    SubsystemShape::qubits(&labels).expect("static labels")
}

fn projector_onto(vectors: &[&KetVector], shape: &SubsystemShape) -> Result<Operator> {
    let n = shape.total_dim();
    let mut m = CMatrix::zeros(n, n);
    for v in vectors {
        let a = v.amplitudes();
        m += a * a.adjoint();
    }
    Ok(Operator::new(m, shape.clone())?.hermitian_part())
}

/// One restart's run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeeSawRun {
    pub factors: Factors,
    /// Score at the start and after every sweep.
    pub score_trajectory: Vec<f64>,
    pub final_score: f64,
    /// Stopped on the improvement tolerance rather than `max_iters`.
    pub converged: bool,
    pub restart_index: usize,
}

impl SeeSawRun {
    pub fn iterations(&self) -> usize {
        self.score_trajectory.len() - 1
    }
}

/// Best run plus statistics over all restarts.
#[derive(Debug, Clone)]
pub struct SeeSawOutcome {
    pub best: SeeSawRun,
    pub converged_restarts: usize,
    pub final_scores: Vec<f64>,
}

impl SeeSawProblem {
    pub fn for_game(g: &SemiQuantumGame) -> Self {
        SeeSawProblem {
            score: g.witness.operator.clone(),
            roles: [Role::Effect, Role::State, Role::Effect],
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::QUBITS
    }

    pub fn objective(&self, f: &Factors) -> f64 {
        let m = contract(self.dims(), f.left.matrix(), f.middle.matrix(), f.right.matrix());
        (self.score.matrix() * m).trace().re
    }

    /// Operator `E` on the slot's space with `Tr[E X]` equal to the objective
    /// when `X` replaces the slot's factor.
    pub fn environment(&self, slot: Slot, f: &Factors) -> Result<Operator> {
        let e = environment(
            self.dims(),
            slot,
            self.score.matrix(),
            f.left.matrix(),
            f.middle.matrix(),
            f.right.matrix(),
        );
        Ok(Operator::new(e, slot_shape(slot))?.hermitian_part())
    }

    /// Exact maximiser of the objective over one factor, the others fixed.
    pub fn best_response(&self, slot: Slot, f: &Factors, mode: UpdateMode) -> Result<Update> {
        let env = self.environment(slot, f)?;
        let spec = eig_hermitian(&env)?;
        let shape = slot_shape(slot);
        let relaxed = self.roles[slot_index(slot)] == Role::Effect && mode == UpdateMode::PsdRelaxed;
        if relaxed {
            let keep: Vec<&KetVector> = spec
                .eigenvalues
                .iter()
                .zip(&spec.eigenvectors)
                .filter(|(l, _)| **l > 0.0)
                .map(|(_, v)| v)
                .collect();
            let predicted = spec.eigenvalues.iter().filter(|l| **l > 0.0).sum();
            return Ok(Update {
                operator: projector_onto(&keep, &shape)?,
                predicted,
            });
        }
        Ok(Update {
            operator: projector_onto(&[&spec.eigenvectors[0]], &shape)?,
            predicted: spec.eigenvalues[0],
        })
    }

    /// Haar-random rank-one factors.
    pub fn random_start(&self, seed: u64) -> Factors {
        let mut s = Sampler::from_seed(seed);
        let mut draw = |slot| s.ket(&slot_shape(slot)).projector();
        Factors {
            left: draw(Slot::Left),
            middle: draw(Slot::Middle),
            right: draw(Slot::Right),
        }
    }

    fn checked(&self, value: f64, restart: usize, trajectory: &[f64]) -> Result<f64> {
        if value.is_finite() {
            return Ok(value);
        }
        let dump = trajectory
            .iter()
            .map(|x| format!("{x:e}"))
            .collect::<Vec<_>>()
            .join(",");
        Err(Error::NonFiniteScore {
            restart,
            iteration: trajectory.len(),
            dump,
        })
    }

    /// Sweeps `middle, left, right` from `start` until the improvement of a
    /// sweep drops below `tol_score` or `max_iters` sweeps have run.
    pub fn run_from(&self, start: Factors, cfg: &SeeSawConfig, restart_index: usize) -> Result<SeeSawRun> {
        cfg.validate()?;
        let mut f = start;
        let mut trajectory = Vec::with_capacity(64);
        let mut current = self.checked(self.objective(&f), restart_index, &trajectory)?;
        trajectory.push(current);
        let mut converged = false;
        for _ in 0..cfg.max_iters {
            for slot in SWEEP {
                let up = self.best_response(slot, &f, cfg.mode)?;
                f.set(slot, up.operator);
            }
            let next = self.checked(self.objective(&f), restart_index, &trajectory)?;
            trajectory.push(next);
            let gain = next - current;
            current = next;
            if gain < cfg.tol_score {
                converged = true;
                break;
            }
        }
        Ok(SeeSawRun {
            factors: f,
            final_score: current,
            score_trajectory: trajectory,
            converged,
            restart_index,
        })
    }

    /// Independent restarts seeded by `derive_seed(cfg.seed, k)`, run in
    /// parallel. The best final score wins, lowest restart index on ties.
    pub fn optimize(&self, cfg: &SeeSawConfig) -> Result<SeeSawOutcome> {
        cfg.validate()?;
        let runs = (0..cfg.restarts)
            .into_par_iter()
            .map(|k| self.run_from(self.random_start(derive_seed(cfg.seed, k as u64)), cfg, k))
            .collect::<Result<Vec<_>>>()?;
        let converged_restarts = runs.iter().filter(|r| r.converged).count();
        let final_scores = runs.iter().map(|r| r.final_score).collect();
        let best = runs
            .into_iter()
            .reduce(|a, b| if b.final_score > a.final_score { b } else { a })
            .expect("restarts >= 1");
        Ok(SeeSawOutcome {
            best,
            converged_restarts,
            final_scores,
        })
    }
}

/// Best see-saw strategy for a semi-quantum game.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptResult {
    pub strategy: Strategy,
    pub score_trajectory: Vec<f64>,
    pub final_score: f64,
    pub converged: bool,
    pub restart_index: usize,
    /// Restarts that stopped on the tolerance.
    pub converged_restarts: usize,
    /// `final_score > l1/4 + 1e-9`.
    pub exceeds_bound: bool,
}

fn strategy_of(f: Factors) -> Result<Strategy> {
    Strategy::unchecked(f.middle, f.left, f.right)
}

fn factors_of(s: &Strategy) -> Factors {
    Factors {
        left: s.m_a.clone(),
        middle: s.rho.clone(),
        right: s.m_b.clone(),
    }
}

impl OptResult {
    fn from_run(g: &SemiQuantumGame, run: SeeSawRun, converged_restarts: usize) -> Result<Self> {
        Ok(OptResult {
            strategy: strategy_of(run.factors)?,
            exceeds_bound: run.final_score > g.l1() / 4.0 + 1e-9,
            score_trajectory: run.score_trajectory,
            final_score: run.final_score,
            converged: run.converged,
            restart_index: run.restart_index,
            converged_restarts,
        })
    }

    /// Wraps a given strategy as a converged single-point result.
    pub fn from_strategy(g: &SemiQuantumGame, s: Strategy) -> Result<Self> {
        let score = crate::game::score(g, &s)?;
        Ok(OptResult {
            strategy: s,
            score_trajectory: vec![score],
            final_score: score,
            converged: true,
            restart_index: 0,
            converged_restarts: 1,
            exceeds_bound: score > g.l1() / 4.0 + 1e-9,
        })
    }

    pub fn gap(&self, g: &SemiQuantumGame) -> f64 {
        g.l1() / 4.0 - self.final_score
    }
}

pub fn seesaw_optimize(g: &SemiQuantumGame, cfg: &SeeSawConfig) -> Result<OptResult> {
    let out = SeeSawProblem::for_game(g).optimize(cfg)?;
    OptResult::from_run(g, out.best, out.converged_restarts)
}

/// Single see-saw run started from `start`.
pub fn seesaw_from(g: &SemiQuantumGame, start: &Strategy, cfg: &SeeSawConfig) -> Result<OptResult> {
    let run = SeeSawProblem::for_game(g).run_from(factors_of(start), cfg, 0)?;
    let c = usize::from(run.converged);
    OptResult::from_run(g, run, c)
}

fn bipartite_labels(v: &KetVector) -> Result<(usize, usize, String)> {
    match (v.shape().dims(), v.shape().labels()) {
        ([x, y], [l, _]) => Ok((*x, *y, l.clone())),
        (d, _) => Err(Error::ShapeMismatch(format!("expected a bipartite vector, got dims {d:?}"))),
    }
}

/// Pure bipartite vectors are LU-equivalent iff their sorted Schmidt
/// coefficients agree.
pub fn lu_equivalent_pure(u: &KetVector, v: &KetVector, tol: f64) -> Result<bool> {
    let (ux, uy, ul) = bipartite_labels(u)?;
    let (vx, vy, vl) = bipartite_labels(v)?;
    if (ux, uy) != (vx, vy) {
        return Err(Error::ShapeMismatch(format!(
            "cuts differ: ({ux},{uy}) vs ({vx},{vy})"
        )));
    }
    let cu = schmidt(u, &[&ul])?.coefficients;
    let cv = schmidt(v, &[&vl])?.coefficients;
    Ok(cu.iter().zip(&cv).all(|(a, b)| (a - b).abs() <= tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
}

/// One named pass/fail clause of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub final_score: f64,
    /// `l1/4 - final_score`.
    pub gap: f64,
    pub tol: f64,
    /// Schmidt form of the top eigenvector of `rho`.
    pub rho_schmidt: SchmidtForm,
    pub m_a_schmidt: SchmidtForm,
    pub m_b_schmidt: SchmidtForm,
    pub target_chi: f64,
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    /// Failed checks in evaluation order.
    pub diagnostics: Vec<String>,
    pub first_failure: Option<String>,
}

pub const CHECK_GAP: &str = "score gap";
pub const CHECK_PURITY: &str = "state purity";
pub const CHECK_RANK: &str = "measurement rank";
pub const CHECK_ANGLE: &str = "measurement Schmidt angle";
pub const CHECK_LU: &str = "state LU equivalence";

/// Top eigenvalue, its eigenvector and the trace.
fn top(op: &Operator) -> Result<(f64, KetVector, f64)> {
    let spec = eig_hermitian(&op.hermitian_part())?;
    let v = spec.eigenvectors[0].clone();
    Ok((spec.eigenvalues[0], v, op.real_trace()))
}

/// Checks, in order: score gap, purity of `rho`, rank of both measurement
/// elements, their Schmidt angles against `pi/4`, and LU-equivalence of
/// `rho`'s top eigenvector to the target.
pub fn certification_report(opt: &OptResult, g: &SemiQuantumGame, tol: f64) -> Result<CertificationReport> {
    let s = &opt.strategy;
    let gap = opt.gap(g);
    let mut checks = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        })
    };

    check(
        CHECK_GAP,
        gap <= tol * g.l1(),
        format!("gap {gap:.3e}, allowed {:.3e}", tol * g.l1()),
    );

    let (rho_top, rho_vec, _) = top(&s.rho)?;
    check(
        CHECK_PURITY,
        rho_top >= 1.0 - tol,
        format!("rho top eigenvalue {rho_top:.12}"),
    );

    let (a_top, a_vec, a_tr) = top(&s.m_a)?;
    let (b_top, b_vec, b_tr) = top(&s.m_b)?;
    let rank_ok = |t: f64, tr: f64| tr > 0.0 && t >= (1.0 - tol) * tr;
    check(
        CHECK_RANK,
        rank_ok(a_top, a_tr) && rank_ok(b_top, b_tr),
        format!("m_a top/trace {a_top:.12}/{a_tr:.12}, m_b top/trace {b_top:.12}/{b_tr:.12}"),
    );

    let rho_schmidt = schmidt(&rho_vec, &[A])?;
    let m_a_schmidt = schmidt(&a_vec, &[A0])?;
    let m_b_schmidt = schmidt(&b_vec, &[B])?;
    let (da, db) = (
        (m_a_schmidt.angle - FRAC_PI_4).abs(),
        (m_b_schmidt.angle - FRAC_PI_4).abs(),
    );
    check(
        CHECK_ANGLE,
        da <= tol && db <= tol,
        format!(
            "m_a angle {:.12}, m_b angle {:.12}",
            m_a_schmidt.angle, m_b_schmidt.angle
        ),
    );

    let lu = lu_equivalent_pure(&rho_vec, &g.witness.target, tol)?;
    check(
        CHECK_LU,
        lu,
        format!(
            "rho coefficients {:?}, target chi {:.12}",
            rho_schmidt.coefficients, g.target_chi
        ),
    );

    let diagnostics: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    let first_failure = checks.iter().find(|c| !c.passed).map(|c| c.name.clone());
    let verdict = if first_failure.is_none() {
        Verdict::Certified
    } else {
        Verdict::NotCertified
    };
    Ok(CertificationReport {
        final_score: opt.final_score,
        gap,
        tol,
        rho_schmidt,
        m_a_schmidt,
        m_b_schmidt,
        target_chi: g.target_chi,
        verdict,
        checks,
        diagnostics,
        first_failure,
    })
}

/// `M~ / Tr(M~)` versus the target projector, Frobenius.
pub fn effective_alignment(opt: &OptResult, g: &SemiQuantumGame) -> Result<f64> {
    let m = effective_element(&opt.strategy)?;
    let normalised = m.operator.scale(1.0 / m.weight);
    Ok(normalised.frobenius_distance(&g.witness.target.projector()))
}
