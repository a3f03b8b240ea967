//! Sampled brute-force checks of the structural facts the certification
//! argument rests on.
//!
//! Every probe draws sample `k` from `derive_seed(seed, k)`, so a reported
//! `worst_seed` regenerates its sample on its own. Samples are evaluated in
//! parallel and reduced in index order, which keeps reports independent of
//! the worker count.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{effective_element, Strategy, A, B};
use crate::qlin::{
    derive_seed, eig_hermitian, partial_transpose, schmidt, tensor, CMatrix, CVector, KetVector,
    Operator, Sampler, SubsystemShape,
};
use crate::witness::{A0, B0};

/// PPT threshold: a partial-transpose eigenvalue below this marks
/// entanglement.
pub const PPT_SLACK: f64 = 1e-10;
/// A second eigenvalue at or below this counts as rank collapse.
pub const RANK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    pub n_samples: usize,
    pub violations: usize,
    pub worst_value: f64,
    pub worst_seed: u64,
    pub tolerance: f64,
    pub notes: Vec<String>,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Which metric direction is bad.
#[derive(Clone, Copy)]
enum Worst {
    Min,
    Max,
}

/// Evaluates `metric` on `n` derived seeds in parallel and reduces in index
/// order. `violates` decides each sample against the tolerance.
fn run_probe<F, V>(name: &str, n: usize, seed: u64, tol: f64, worst: Worst, metric: F, violates: V) -> Result<ProbeReport>
where
    F: Fn(u64) -> Result<f64> + Sync,
    V: Fn(f64) -> bool,
{
    if n == 0 {
        return Err(Error::InvalidArgument("probe needs n >= 1".into()));
    }
    let values: Vec<(u64, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let s = derive_seed(seed, k);
            metric(s).map(|v| (s, v))
        })
        .collect::<Result<_>>()?;
    let mut violations = 0;
    let (mut worst_seed, mut worst_value) = values[0];
    for &(s, v) in &values {
        if violates(v) {
            violations += 1;
        }
        let worse = match worst {
            Worst::Min => v < worst_value,
            Worst::Max => v > worst_value,
        };
        if worse {
            worst_seed = s;
            worst_value = v;
        }
    }
    Ok(ProbeReport {
        probe: name.to_string(),
        n_samples: n,
        violations,
        worst_value,
        worst_seed,
        tolerance: tol,
        notes: Vec::new(),
    })
}

fn qubits(labels: &[&str]) -> SubsystemShape {
    SubsystemShape::qubits(labels).expect("static labels")
}

fn second_eigenvalue(op: &Operator) -> Result<f64> {
    Ok(eig_hermitian(&op.hermitian_part())?.eigenvalues[1])
}

/// Smallest eigenvalue of the partial transpose on the second factor.
pub fn min_pt_eigenvalue(op: &Operator) -> Result<f64> {
    if op.shape().dims() != [2, 2] {
        return Err(Error::ShapeMismatch(format!(
            "PPT decision needs a 2x2 operator, got dims {:?}",
            op.shape().dims()
        )));
    }
    let second = op.shape().labels()[1].clone();
    partial_transpose(op, &second)?.hermitian_part().min_eigenvalue()
}

/// Entangled iff the partial transpose has an eigenvalue below `-1e-10`
/// (exact at two qubits).
pub fn ppt_entangled(op: &Operator) -> Result<bool> {
    Ok(min_pt_eigenvalue(op)? < -PPT_SLACK)
}

/// Which player's measurement element is sampled with special structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Alice,
    Bob,
}

/// Wishart qubit factor of rank at most two.
fn psd_qubit(s: &mut Sampler, label: &str) -> Operator {
    let x = s.gaussian_matrix(2, 2);
    Operator::new(&x * x.adjoint(), qubits(&[label])).unwrap().hermitian_part()
}

/// Rescales a PSD operator so its top eigenvalue is `top`.
fn cap(op: &Operator, top: f64) -> Result<Operator> {
    let m = op.max_eigenvalue()?;
    Ok(op.scale(top / m).hermitian_part())
}

/// `sum_{k<3} N_k (x) N'_k` from Wishart factors, scaled to a random top
/// eigenvalue in `(0, 1]`.
pub fn separable_element(s: &mut Sampler, labels: [&str; 2]) -> Result<Operator> {
    let mut acc: Option<Operator> = None;
    for _ in 0..3 {
        let t = tensor(&[&psd_qubit(s, labels[0]), &psd_qubit(s, labels[1])])?;
        acc = Some(match acc {
            None => t,
            Some(a) => a.add(&t)?,
        });
    }
    let top = s.uniform(0.1, 1.0);
    cap(&acc.expect("three terms"), top)
}

/// Random PSD element with top eigenvalue in `(0, 1]`.
pub fn general_element(s: &mut Sampler, labels: [&str; 2]) -> Result<Operator> {
    let x = s.gaussian_matrix(4, 4);
    let op = Operator::new(&x * x.adjoint(), qubits(&labels))?.hermitian_part();
    let top = s.uniform(0.1, 1.0);
    cap(&op, top)
}

/// One sample of the separable-measurement probe: the separable element on
/// `side`, a general element on the other side and a random mixed state.
pub fn theorem1_sample(seed: u64, side: Side) -> Result<Strategy> {
    let mut s = Sampler::from_seed(seed);
    let rank = 1 + (s.uniform(0.0, 4.0) as usize).min(3);
    let rho = s.density(&qubits(&[A, B]), rank)?;
    let (m_a, m_b) = match side {
        Side::Alice => (separable_element(&mut s, [A0, A])?, general_element(&mut s, [B, B0])?),
        Side::Bob => (general_element(&mut s, [A0, A])?, separable_element(&mut s, [B, B0])?),
    };
    Strategy::new(rho, m_a, m_b)
}

/// `Tr[W_c M~] / Tr(M~)` for the standard witness
/// `W_c = c1^2 I - |psi><psi|` of a random entangled target (non-negative on
/// every separable operator).
fn standard_witness_value(m: &Operator, s: &mut Sampler) -> Result<f64> {
    let psi = s.ket(&qubits(&[A0, B0]));
    let c1 = schmidt(&psi, &[A0])?.coefficients[0];
    let w = Operator::identity(qubits(&[A0, B0]))
        .scale(c1 * c1)
        .sub(&psi.projector())?;
    let tr = m.real_trace();
    Ok(w.trace_product(m)?.re / tr.max(f64::MIN_POSITIVE))
}

/// Separable measurements on `side` must yield separable effective elements.
/// The metric is the smallest partial-transpose eigenvalue of `M~`
/// normalised to unit trace; samples below `-1e-9` are violations. A
/// standard witness is evaluated on every sample as a second opinion.
pub fn theorem1_probe(n: usize, seed: u64, side: Side) -> Result<ProbeReport> {
    let tol = 1e-9;
    let witness_failures = std::sync::atomic::AtomicUsize::new(0);
    let mut rep = run_probe(
        "theorem1",
        n,
        seed,
        tol,
        Worst::Min,
        |s| {
            let st = theorem1_sample(s, side)?;
            let m = effective_element(&st)?.operator;
            let mut ws = Sampler::from_seed(s ^ 0x5EED);
            if standard_witness_value(&m, &mut ws)? < -tol {
                witness_failures.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            }
            Ok(min_pt_eigenvalue(&m)? / m.real_trace())
        },
        |v| v < -tol,
    )?;
    let wf = witness_failures.into_inner();
    rep.violations += wf;
    rep.notes.push(format!("separable side: {side:?}"));
    rep.notes.push(format!("standard-witness violations: {wf}"));
    Ok(rep)
}

/// `cos t |00> + sin t |11>` rotated by Haar-random local unitaries.
fn rotated_schmidt(s: &mut Sampler, angle: f64, labels: [&str; 2]) -> Result<KetVector> {
    let v = KetVector::from_real(&[angle.cos(), 0.0, 0.0, angle.sin()], qubits(&labels))?;
    let u = s.unitary(&qubits(&[labels[0]]));
    let w = s.unitary(&qubits(&[labels[1]]));
    KetVector::new(v.apply(&tensor(&[&u, &w])?)?, qubits(&labels))
}

fn angle_in(s: &mut Sampler, min_angle: f64) -> f64 {
    s.uniform(min_angle, FRAC_PI_2 - min_angle)
}

fn check_angle(min_angle: f64) -> Result<()> {
    if !(min_angle > 0.0 && min_angle <= std::f64::consts::FRAC_PI_4) {
        return Err(Error::InvalidArgument(format!("min_angle must lie in (0, pi/4], got {min_angle}")));
    }
    Ok(())
}

/// Mixed state with second eigenvalue at least `min_mix` and rank-one
/// entangled measurements with Schmidt angles in `[min_angle, pi/2 -
/// min_angle]`.
pub fn lemma1_sample(seed: u64, min_mix: f64, min_angle: f64) -> Result<Strategy> {
    let mut s = Sampler::from_seed(seed);
    let rho = loop {
        let mut w = s.dirichlet(4);
        w.sort_by(|a, b| b.total_cmp(a));
        if w[1] >= min_mix {
            let u = s.unitary_matrix(4);
            break s.density_with_spectrum(&qubits(&[A, B]), &w, &u);
        }
    };
    let (ta, tb) = (angle_in(&mut s, min_angle), angle_in(&mut s, min_angle));
    let m_a = rotated_schmidt(&mut s, ta, [A0, A])?.projector();
    let m_b = rotated_schmidt(&mut s, tb, [B, B0])?.projector();
    Strategy::new(rho, m_a, m_b)
}

/// A mixed state seen through rank-one entangled measurements keeps a
/// mixed effective element. Metric: second eigenvalue of `M~`.
pub fn lemma1_probe(n: usize, seed: u64, min_mix: f64, min_angle: f64) -> Result<ProbeReport> {
    if !(min_mix > 0.0 && min_mix <= 0.5) {
        return Err(Error::InvalidArgument(format!("min_mix must lie in (0, 0.5], got {min_mix}")));
    }
    check_angle(min_angle)?;
    let mut rep = run_probe(
        "lemma1",
        n,
        seed,
        RANK_FLOOR,
        Worst::Min,
        |s| second_eigenvalue(&effective_element(&lemma1_sample(s, min_mix, min_angle)?)?.operator),
        |v| v <= RANK_FLOOR,
    )?;
    rep.notes.push(format!("min_mix {min_mix}, min_angle {min_angle}"));
    Ok(rep)
}

/// Projector onto a Haar-random plane whose orthonormal basis vectors both
/// have Schmidt angle at least `min_angle`.
fn entangled_plane(s: &mut Sampler, min_angle: f64, labels: [&str; 2]) -> Result<Operator> {
    loop {
        let u = s.unitary_matrix(4);
        let cols: Vec<KetVector> = (0..2)
            .map(|k| KetVector::new(u.column(k).into_owned(), qubits(&labels)))
            .collect::<Result<_>>()?;
        let ok = cols
            .iter()
            .map(|v| schmidt(v, &[labels[0]]).map(|f| f.angle >= min_angle))
            .collect::<Result<Vec<_>>>()?;
        if ok.iter().all(|&b| b) {
            return cols[0].projector().add(&cols[1].projector());
        }
    }
}

/// Pure entangled state, rank-two projective element on `side` and a
/// rank-one element on the other side.
pub fn lemma2_sample(seed: u64, min_angle: f64, side: Side) -> Result<Strategy> {
    let mut s = Sampler::from_seed(seed);
    let psi = loop {
        let v = s.ket(&qubits(&[A, B]));
        if schmidt(&v, &[A])?.angle >= min_angle {
            break v;
        }
    };
    let t = angle_in(&mut s, min_angle);
    let (m_a, m_b) = match side {
        Side::Alice => (
            entangled_plane(&mut s, min_angle, [A0, A])?,
            rotated_schmidt(&mut s, t, [B, B0])?.projector(),
        ),
        Side::Bob => (
            rotated_schmidt(&mut s, t, [A0, A])?.projector(),
            entangled_plane(&mut s, min_angle, [B, B0])?,
        ),
    };
    Strategy::new(psi.projector(), m_a, m_b)
}

/// A rank-two measurement element keeps the effective element mixed.
/// Metric: second eigenvalue of `M~`.
pub fn lemma2_probe(n: usize, seed: u64, min_angle: f64, side: Side) -> Result<ProbeReport> {
    check_angle(min_angle)?;
    let mut rep = run_probe(
        "lemma2",
        n,
        seed,
        RANK_FLOOR,
        Worst::Min,
        |s| second_eigenvalue(&effective_element(&lemma2_sample(s, min_angle, side)?)?.operator),
        |v| v <= RANK_FLOOR,
    )?;
    rep.notes.push(format!("rank-two side: {side:?}, min_angle {min_angle}"));
    Ok(rep)
}

/// Local vectors and a bipartite vector orthogonal to the two mixed
/// products `phi_a (x) phi_b_bar` and `phi_a_bar (x) phi_b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma3Instance {
    pub d_a: usize,
    pub d_b: usize,
    pub psi: KetVector,
    pub phi_a: KetVector,
    pub phi_a_bar: KetVector,
    pub phi_b: KetVector,
    pub phi_b_bar: KetVector,
    /// `arccos |<phi_a|phi_a_bar>|`.
    pub theta: f64,
    /// `arccos |<phi_b|phi_b_bar>|`.
    pub gamma: f64,
}

fn kron(x: &KetVector, y: &KetVector) -> CVector {
    x.amplitudes().kronecker(y.amplitudes())
}

fn overlap_angle(x: &KetVector, y: &KetVector) -> f64 {
    x.inner(y).norm().min(1.0).acos()
}

/// Orthonormal basis (Gram-Schmidt) of the span of `vs`, dropping
/// dependent vectors.
fn orthonormalise(vs: &[CVector]) -> Vec<CVector> {
    let mut out: Vec<CVector> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for b in &out {
            let p = b.dotc(&w);
            w -= b.map(|z| z * p);
        }
        let n = w.norm();
        if n > 1e-10 {
            out.push(w.map(|z| z / n));
        }
    }
    out
}

/// Removes the components of `v` along the orthonormal `basis`.
fn project_out(v: &CVector, basis: &[CVector]) -> CVector {
    let mut w = v.clone();
    for b in basis {
        let p = b.dotc(&w);
        w -= b.map(|z| z * p);
    }
    w
}

impl Lemma3Instance {
    fn build(d_a: usize, d_b: usize, local: [KetVector; 4], psi: KetVector) -> Self {
        let [phi_a, phi_a_bar, phi_b, phi_b_bar] = local;
        let theta = overlap_angle(&phi_a, &phi_a_bar);
        let gamma = overlap_angle(&phi_b, &phi_b_bar);
        Lemma3Instance {
            d_a,
            d_b,
            psi,
            phi_a,
            phi_a_bar,
            phi_b,
            phi_b_bar,
            theta,
            gamma,
        }
    }

    /// `|<Psi|phi_a phi_b>|^2 + |<Psi|phi_a_bar phi_b_bar>|^2`.
    pub fn value(&self) -> f64 {
        let p = self.psi.amplitudes();
        p.dotc(&kron(&self.phi_a, &self.phi_b)).norm_sqr()
            + p.dotc(&kron(&self.phi_a_bar, &self.phi_b_bar)).norm_sqr()
    }

    /// Largest violation of the orthogonality constraints and unit norms.
    pub fn residual(&self) -> f64 {
        let p = self.psi.amplitudes();
        let mut r = p
            .dotc(&kron(&self.phi_a, &self.phi_b_bar))
            .norm()
            .max(p.dotc(&kron(&self.phi_a_bar, &self.phi_b)).norm());
        for v in [&self.psi, &self.phi_a, &self.phi_a_bar, &self.phi_b, &self.phi_b_bar] {
            r = r.max((v.norm() - 1.0).abs());
        }
        r
    }
}

fn check_dims(d_a: usize, d_b: usize) -> Result<()> {
    if d_a < 2 || d_b < 2 {
        return Err(Error::InvalidArgument(format!("dimensions must be >= 2, got ({d_a}, {d_b})")));
    }
    Ok(())
}

/// Haar-random local vectors and a `Psi` drawn uniformly from the orthogonal
/// complement of the two mixed products.
pub fn lemma3_sample(d_a: usize, d_b: usize, seed: u64) -> Result<Lemma3Instance> {
    check_dims(d_a, d_b)?;
    let mut s = Sampler::from_seed(seed);
    let sa = SubsystemShape::new(vec![d_a], ["A"])?;
    let sb = SubsystemShape::new(vec![d_b], ["B"])?;
    let local = [s.ket(&sa), s.ket(&sa), s.ket(&sb), s.ket(&sb)];
    let span = orthonormalise(&[kron(&local[0], &local[3]), kron(&local[1], &local[2])]);
    assert!(d_a * d_b > span.len(), "complement is non-empty for d_a d_b >= 4");
    let joint = SubsystemShape::new(vec![d_a, d_b], ["A", "B"])?;
    let psi = KetVector::normalize(project_out(&s.gaussian_vector(d_a * d_b), &span), joint)?;
    Ok(Lemma3Instance::build(d_a, d_b, local, psi))
}

/// Orthogonal local pairs (`theta = gamma = pi/2`) with `Psi` mixing
/// `phi_a phi_b` and `phi_a_bar phi_b_bar`, plus a weight `leak` on a
/// direction outside the span of all four products (needs `d_a d_b > 4`
/// when `leak > 0`).
pub fn lemma3_orthogonal(d_a: usize, d_b: usize, seed: u64, leak: f64) -> Result<Lemma3Instance> {
    check_dims(d_a, d_b)?;
    if !(0.0..1.0).contains(&leak) {
        return Err(Error::InvalidArgument(format!("leak must lie in [0, 1), got {leak}")));
    }
    if leak > 0.0 && d_a * d_b <= 4 {
        return Err(Error::InvalidArgument("no direction outside the product span at (2, 2)".into()));
    }
    let mut s = Sampler::from_seed(seed);
    let ua = s.unitary_matrix(d_a);
    let ub = s.unitary_matrix(d_b);
    let sa = SubsystemShape::new(vec![d_a], ["A"])?;
    let sb = SubsystemShape::new(vec![d_b], ["B"])?;
    let col = |u: &CMatrix, k: usize, sh: &SubsystemShape| KetVector::new(u.column(k).into_owned(), sh.clone());
    let local = [col(&ua, 0, &sa)?, col(&ua, 1, &sa)?, col(&ub, 0, &sb)?, col(&ub, 1, &sb)?];
    let t = s.uniform(0.0, FRAC_PI_2);
    let phase = s.uniform(0.0, 4.0 * FRAC_PI_2);
    let inside = kron(&local[0], &local[2]).map(|z| z * t.cos())
        + kron(&local[1], &local[3]).map(|z| z * crate::qlin::C64::from_polar(t.sin(), phase));
    let mut amp = inside.map(|z| z * (1.0 - leak * leak).sqrt());
    if leak > 0.0 {
        let span = orthonormalise(&[
            kron(&local[0], &local[2]),
            kron(&local[0], &local[3]),
            kron(&local[1], &local[2]),
            kron(&local[1], &local[3]),
        ]);
        let w = project_out(&s.gaussian_vector(d_a * d_b), &span);
        let n = w.norm();
        amp += w.map(|z| z * (leak / n));
    }
    let joint = SubsystemShape::new(vec![d_a, d_b], ["A", "B"])?;
    Ok(Lemma3Instance::build(d_a, d_b, local, KetVector::new(amp, joint)?))
}

/// `L <= 1 + 1e-9` over `n` samples cycling through `dims`, plus one
/// equality construction per dimension pair that must reach `L = 1` within
/// 1e-12 (failures count as violations).
pub fn lemma3_check(n: usize, dims: &[(usize, usize)], seed: u64) -> Result<ProbeReport> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("no dimension pairs".into()));
    }
    for &(a, b) in dims {
        check_dims(a, b)?;
    }
    let tol = 1e-9;
    let residual_failures = std::sync::atomic::AtomicUsize::new(0);
    let mut rep = run_probe(
        "lemma3",
        n,
        seed,
        tol,
        Worst::Max,
        |s| {
            // Dimension pair chosen from the seed so the sample is self-contained.
            let (a, b) = dims[(s % dims.len() as u64) as usize];
            let inst = lemma3_sample(a, b, s)?;
            if inst.residual() > 1e-12 {
                residual_failures.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            }
            Ok(inst.value())
        },
        |v| v > 1.0 + tol,
    )?;
    let rf = residual_failures.into_inner();
    rep.violations += rf;
    rep.notes.push(format!("dims {dims:?}"));
    rep.notes.push(format!("constraint residual failures: {rf}"));
    for (k, &(a, b)) in dims.iter().enumerate() {
        let eq = lemma3_orthogonal(a, b, derive_seed(seed ^ 0xE9, k as u64), 0.0)?;
        let dev = (eq.value() - 1.0).abs();
        if dev > 1e-12 {
            rep.violations += 1;
        }
        rep.notes.push(format!("equality construction at ({a}, {b}): |L - 1| = {dev:.3e}"));
    }
    Ok(rep)
}

/// Lemma-3 sample regenerated from one seed of a `lemma3_check` run.
pub fn lemma3_sample_for(dims: &[(usize, usize)], sample_seed: u64) -> Result<Lemma3Instance> {
    let (a, b) = dims[(sample_seed % dims.len() as u64) as usize];
    lemma3_sample(a, b, sample_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub x: f64,
    pub value: f64,
}

/// Scan of `f(x) = a x^2 + b x sqrt(1 - c x^2) + d` on `[0, 1/sqrt c]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppendixDReport {
    pub theta: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub grid_n: usize,
    pub grid_max: f64,
    pub grid_argmax: f64,
    /// Largest change of `f` between neighbouring grid points.
    pub grid_tolerance: f64,
    /// Endpoints and both stationary roots.
    pub candidates: Vec<Candidate>,
    pub best_candidate: Candidate,
    /// Larger of `f(1/sqrt c)` and the root with the minus sign.
    pub minus_root_pair_max: f64,
    /// Whether that pair reaches the grid maximum within grid tolerance.
    pub minus_root_pair_attains: bool,
    /// Grid max within grid tolerance of the best candidate.
    pub consistent: bool,
    /// Grid max at most `1 + 1e-9`.
    pub bounded: bool,
}

pub fn f_value(a: f64, b: f64, c: f64, d: f64, x: f64) -> f64 {
    a * x * x + b * x * (1.0 - c * x * x).max(0.0).sqrt() + d
}

/// Coefficients `(a, b, c, d)` for overlap angles `theta`, `gamma`.
pub fn appendix_d_coefficients(theta: f64, gamma: f64) -> Result<(f64, f64, f64, f64)> {
    for (name, v) in [("theta", theta), ("gamma", gamma)] {
        if !(v > 0.0 && v <= FRAC_PI_2) {
            return Err(Error::Boundary(format!("{name} = {v} outside (0, pi/2]")));
        }
    }
    let (st, ct) = theta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    let a = 2.0 * ct * ct * cg * cg;
    let b = 2.0 * st * ct * sg * cg;
    let c = 1.0 + (cg * cg) / (sg * sg) + (ct * ct) / (st * st);
    let d = st * st * sg * sg;
    Ok((a, b, c, d))
}

pub fn appendix_d_scan(theta: f64, gamma: f64, grid_n: usize) -> Result<AppendixDReport> {
    if grid_n < 10 {
        return Err(Error::InvalidArgument(format!("grid_n must be >= 10, got {grid_n}")));
    }
    let (a, b, c, d) = appendix_d_coefficients(theta, gamma)?;
    let f = |x: f64| f_value(a, b, c, d, x);
    let xmax = 1.0 / c.sqrt();
    let xs: Vec<f64> = (0..=grid_n).map(|k| xmax * k as f64 / grid_n as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut arg = 0;
    for k in 1..fs.len() {
        if fs[k] > fs[arg] {
            arg = k;
        }
    }
    let grid_tolerance = fs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);

    let disc = (a * a + b * b * c).sqrt();
    let root = |sign: f64| {
        let x2 = 1.0 / (2.0 * c) + sign * a / (2.0 * c * disc);
        x2.max(0.0).sqrt().min(xmax)
    };
    let cand = |label: &str, x: f64| Candidate {
        label: label.into(),
        x,
        value: f(x),
    };
    let candidates = vec![
        cand("lower_endpoint", 0.0),
        cand("upper_endpoint", xmax),
        cand("stationary_minus", root(-1.0)),
        cand("stationary_plus", root(1.0)),
    ];
    let best_candidate = candidates
        .iter()
        .cloned()
        .fold(candidates[0].clone(), |m, c| if c.value > m.value { c } else { m });
    let grid_max = fs[arg];
    let minus_root_pair_max = candidates[1].value.max(candidates[2].value);
    Ok(AppendixDReport {
        theta,
        gamma,
        a,
        b,
        c,
        d,
        grid_n,
        grid_max,
        grid_argmax: xs[arg],
        grid_tolerance,
        minus_root_pair_attains: minus_root_pair_max >= grid_max - grid_tolerance,
        consistent: grid_max <= best_candidate.value + grid_tolerance
            && grid_max >= best_candidate.value - grid_tolerance,
        bounded: grid_max <= 1.0 + 1e-9,
        candidates,
        best_candidate,
        minus_root_pair_max,
    })
}

/// `appendix_d_scan` over the interior grid `theta, gamma = k pi / (2 (n + 1))`,
/// `k = 1..=n`. A point violates if it is unbounded or inconsistent.
pub fn appendix_d_grid(n: usize, scan_n: usize) -> Result<(ProbeReport, Vec<AppendixDReport>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid needs n >= 1".into()));
    }
    let h = FRAC_PI_2 / (n + 1) as f64;
    let mut reports = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            reports.push(appendix_d_scan(i as f64 * h, j as f64 * h, scan_n)?);
        }
    }
    let violations = reports.iter().filter(|r| !(r.bounded && r.consistent)).count();
    let (worst_idx, worst) = reports
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |m, (k, r)| if r.grid_max > m.1 { (k, r.grid_max) } else { m });
    let misses = reports.iter().filter(|r| !r.minus_root_pair_attains).count();
    let rep = ProbeReport {
        probe: "appendix_d".into(),
        n_samples: reports.len(),
        violations,
        worst_value: worst,
        worst_seed: worst_idx as u64,
        tolerance: 1e-9,
        notes: vec![
            format!("{n}x{n} interior grid, {scan_n} scan intervals; worst_seed is the grid index"),
            format!("points where endpoint and minus root miss the maximum: {misses}"),
        ],
    };
    Ok((rep, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::phi_plus;
    use std::f64::consts::PI;

    #[test]
    fn ppt_examples() {
        let phi = phi_plus([A0, B0]).projector();
        assert!(ppt_entangled(&phi).unwrap());
        assert!((min_pt_eigenvalue(&phi).unwrap() + 0.5).abs() < 1e-12);
        let mixed = Operator::identity(qubits(&[A0, B0])).scale(0.25);
        assert!(!ppt_entangled(&mixed).unwrap());
        for chi in [PI / 6.0, PI / 12.0, 0.1] {
            let psi = KetVector::from_real(&[chi.cos(), 0.0, 0.0, chi.sin()], qubits(&[A0, B0])).unwrap();
            let m = psi.projector().scale(0.25);
            assert!(ppt_entangled(&m).unwrap());
            let expected = -chi.cos() * chi.sin() / 4.0;
            assert!((min_pt_eigenvalue(&m).unwrap() - expected).abs() < 1e-12);
        }
        let three = Operator::identity(SubsystemShape::new(vec![2, 3], ["x", "y"]).unwrap());
        assert!(matches!(ppt_entangled(&three), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn separable_probe_small() {
        for side in [Side::Alice, Side::Bob] {
            let rep = theorem1_probe(100, 5, side).unwrap();
            assert!(rep.passed(), "{rep:?}");
            let st = theorem1_sample(rep.worst_seed, side).unwrap();
            let m = effective_element(&st).unwrap().operator;
            assert_eq!(min_pt_eigenvalue(&m).unwrap() / m.real_trace(), rep.worst_value);
        }
    }

    #[test]
    fn product_measurement_gives_product_element() {
        let mut s = Sampler::from_seed(2);
        let (p, q) = (psd_qubit(&mut s, A0), psd_qubit(&mut s, A));
        let m_a = cap(&tensor(&[&p, &q]).unwrap(), 0.9).unwrap();
        let rho = s.density(&qubits(&[A, B]), 4).unwrap();
        let m_b = general_element(&mut s, [B, B0]).unwrap();
        let st = Strategy::new(rho, m_a.clone(), m_b).unwrap();
        let m = effective_element(&st).unwrap().operator;
        // M~ = P (x) X for some X on B0.
        let a0 = crate::qlin::partial_trace(&m, &[A0]).unwrap();
        let b0 = crate::qlin::partial_trace(&m, &[B0]).unwrap();
        let prod = tensor(&[&a0, &b0]).unwrap().scale(1.0 / m.real_trace());
        assert!(prod.frobenius_distance(&m) < 1e-12);
    }

    #[test]
    fn lemma1_small_and_controls() {
        let rep = lemma1_probe(200, 1, 0.1, PI / 8.0).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let again = lemma1_probe(200, 1, 0.1, PI / 8.0).unwrap();
        assert_eq!(rep, again);
        let st = lemma1_sample(rep.worst_seed, 0.1, PI / 8.0).unwrap();
        let v = second_eigenvalue(&effective_element(&st).unwrap().operator).unwrap();
        assert_eq!(v, rep.worst_value);
        // Pure-state control: rank one.
        let mut st = lemma1_sample(3, 0.1, PI / 8.0).unwrap();
        st.rho = Sampler::from_seed(4).ket(&qubits(&[A, B])).projector();
        let m = effective_element(&st).unwrap().operator;
        assert!(second_eigenvalue(&m).unwrap().abs() < 1e-12);
        assert!(lemma1_probe(1, 1, 0.0, 0.3).is_err());
        assert!(lemma1_probe(1, 1, 0.1, 1.0).is_err());
    }

    #[test]
    fn product_measurements_collapse_mixed_state() {
        let zero = |l: [&str; 2]| Operator::projector(&KetVector::basis(qubits(&l), 0).unwrap());
        let rho = Sampler::from_seed(9).density(&qubits(&[A, B]), 4).unwrap();
        let st = Strategy::new(rho.clone(), zero([A0, A]), zero([B, B0])).unwrap();
        let m = effective_element(&st).unwrap().operator;
        assert!(second_eigenvalue(&rho).unwrap() > 0.01);
        assert!(second_eigenvalue(&m).unwrap().abs() < 1e-15);
        assert!(m.max_eigenvalue().unwrap() > 0.0);
    }

    #[test]
    fn lemma2_small_and_controls() {
        for side in [Side::Alice, Side::Bob] {
            let rep = lemma2_probe(200, 6, PI / 8.0, side).unwrap();
            assert!(rep.passed(), "{rep:?}");
        }
        let mut st = lemma2_sample(1, PI / 8.0, Side::Alice).unwrap();
        st.m_a = Operator::identity(qubits(&[A0, A]));
        let m = effective_element(&st).unwrap().operator;
        assert!(second_eigenvalue(&m).unwrap() > 1e-8);
        let mut s = Sampler::from_seed(2);
        st.m_a = rotated_schmidt(&mut s, 0.5, [A0, A]).unwrap().projector();
        let m = effective_element(&st).unwrap().operator;
        assert!(second_eigenvalue(&m).unwrap().abs() < 1e-12);
    }

    #[test]
    fn lemma3_instances_satisfy_constraints() {
        for seed in 0..1000 {
            assert!(lemma3_sample(2, 2, seed).unwrap().residual() <= 1e-12);
        }
        for seed in 0..100 {
            let inst = lemma3_sample(3, 4, seed).unwrap();
            assert!(inst.residual() <= 1e-12);
            assert_eq!(inst.psi.amplitudes().len(), 12);
        }
        assert!(lemma3_sample(1, 4, 0).is_err());
    }

    #[test]
    fn lemma3_equality_and_leak() {
        for seed in 0..20 {
            let eq = lemma3_orthogonal(2, 2, seed, 0.0).unwrap();
            assert!((eq.theta - FRAC_PI_2).abs() < 1e-6 && (eq.gamma - FRAC_PI_2).abs() < 1e-6);
            assert!(eq.residual() <= 1e-12);
            assert!((eq.value() - 1.0).abs() <= 1e-12);
            let leaky = lemma3_orthogonal(3, 3, seed, 0.3).unwrap();
            assert!(leaky.residual() <= 1e-12);
            assert!(leaky.value() < 1.0 - 1e-3);
            assert!((leaky.value() - (1.0 - 0.09)).abs() < 1e-12);
        }
        assert!(lemma3_orthogonal(2, 2, 0, 0.3).is_err());
    }

    #[test]
    fn lemma3_check_small() {
        let dims = [(2, 2), (2, 3), (3, 3)];
        let rep = lemma3_check(600, &dims, 8).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.worst_value < 1.0);
        assert_eq!(lemma3_sample_for(&dims, rep.worst_seed).unwrap().value(), rep.worst_value);
    }

    #[test]
    fn appendix_d_upper_endpoint_two_ways() {
        let t = PI / 3.0;
        let rep = appendix_d_scan(t, t, 1000).unwrap();
        let closed = (1.0 + t.cos().powi(2) * t.cos().powi(2)) / rep.c;
        let up = rep.candidates.iter().find(|c| c.label == "upper_endpoint").unwrap();
        assert!((up.value - closed).abs() < 1e-12);
        assert!(rep.consistent && rep.bounded);
        assert!((rep.best_candidate.value - 0.75).abs() < 1e-12);
        assert!(!rep.minus_root_pair_attains);
    }

    #[test]
    fn appendix_d_approaches_one() {
        let maxima: Vec<f64> = [1.4, 1.5, 1.55]
            .iter()
            .map(|&t| appendix_d_scan(t, t, 2000).unwrap().best_candidate.value)
            .collect();
        assert!(maxima.windows(2).all(|w| w[1] > w[0]));
        assert!(maxima.iter().all(|m| *m < 1.0));
        assert!(1.0 - maxima[2] < 1e-3);
    }

    #[test]
    fn appendix_d_degenerate_and_boundary() {
        let g = 0.7;
        let rep = appendix_d_scan(FRAC_PI_2, g, 100).unwrap();
        assert!(rep.a.abs() < 1e-30 && rep.b.abs() < 1e-15);
        assert!((rep.grid_max - g.sin().powi(2)).abs() < 1e-12);
        for (t, g) in [(0.0, 0.5), (0.5, 0.0), (0.5, 2.0), (-0.1, 0.5)] {
            assert!(matches!(appendix_d_scan(t, g, 100), Err(Error::Boundary(_))));
        }
        assert!(appendix_d_scan(0.5, 0.5, 5).is_err());
    }

    #[test]
    fn appendix_d_grid_bounded() {
        let (rep, all) = appendix_d_grid(8, 400).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(all.iter().all(|r| r.grid_max <= 1.0));
        assert_eq!(all.len(), 64);
    }

    #[test]
    fn reports_round_trip_through_json() {
        let rep = lemma3_check(10, &[(2, 2)], 1).unwrap();
        let back: ProbeReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(back, rep);
    }
}
