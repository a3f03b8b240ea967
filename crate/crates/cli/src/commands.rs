use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sqgame::certify::{
    bound_scan, certification_report, seesaw_optimize, SeeSawConfig, UpdateMode, Verdict,
};
use sqgame::game::{phi_plus, SemiQuantumGame};
use sqgame::oracle::{
    appendix_d_grid, appendix_d_scan, lemma1_probe, lemma2_probe, lemma3_check, theorem1_probe, ProbeReport,
    Side,
};
use sqgame::qlin::{derive_seed, random_unitary, tensor, KetVector, SubsystemShape};
use sqgame::swap::{corollary_check, m1_matches_target, swap_game_operator, swap_optimize, swap_score, SwapInstance};
use sqgame::witness::{pauli6_states, tetrahedral_states, EnsembleName, DEFAULT_L1, DEFAULT_PENALTY};

use crate::config::{InstanceSpec, TargetSpec};
use crate::{
    BoundArgs, CertifyArgs, DesignArgs, EnsembleArg, Failure, Global, InstanceArgs, ModeArg, ProbeArgs,
    SeeSawArgs, SideArg, SwapArgs, TargetArgs, EXIT_FAIL, EXIT_NONCONVERGED, EXIT_PASS,
};

const DEFAULT_TOL: f64 = 1e-6;
const SWAP_OPTIMUM: f64 = 0.25;
const BOUND_SLACK: f64 = 1e-9;

/// Contents of a design file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    /// Witness eigenvalues, largest first.
    pub eigenvalues: Vec<f64>,
    pub ensemble: EnsembleName,
    pub penalty: f64,
    pub game: SemiQuantumGame,
}

fn verdict_code(passed: bool) -> u8 {
    if passed {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::invalid(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::invalid(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn trajectory_csv(scores: &[f64]) -> String {
    let mut s = String::from("iteration,score\n");
    for (k, v) in scores.iter().enumerate() {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

/// Trajectory goes to the explicit path, or next to `--out` as `<stem>.trajectory.csv`.
fn trajectory_path(g: &Global, explicit: Option<&PathBuf>) -> Option<PathBuf> {
    explicit
        .cloned()
        .or_else(|| g.config.trajectory.clone())
        .or_else(|| g.out.as_ref().map(|o| o.with_extension("trajectory.csv")))
}

fn target_labels() -> SubsystemShape {
    SubsystemShape::qubits(&["A0", "B0"]).expect("distinct labels")
}

fn build_target(args: &TargetArgs, spec: Option<&TargetSpec>) -> Result<Option<KetVector>, Failure> {
    let chi = args.chi.or(spec.and_then(|s| s.chi));
    let lu_seed = args.lu_seed.or(spec.and_then(|s| s.lu_seed));
    let amplitudes = if args.chi.is_some() { None } else { spec.and_then(|s| s.amplitudes.clone()) };
    let shape = target_labels();
    let psi = match (chi, amplitudes) {
        (Some(_), Some(_)) => return Err(Failure::invalid("target needs either chi or amplitudes, not both")),
        (None, None) => return Ok(None),
        (Some(chi), None) => {
            if !chi.is_finite() {
                return Err(Failure::invalid(format!("chi must be finite, got {chi}")));
            }
            KetVector::from_real(&[chi.cos(), 0.0, 0.0, chi.sin()], shape.clone())?
        }
        (None, Some(a)) => {
            if a.len() != 4 {
                return Err(Failure::invalid(format!("target needs 4 amplitudes, got {}", a.len())));
            }
            let v = sqgame::qlin::CVector::from_iterator(4, a.iter().map(|p| sqgame::qlin::C64::new(p[0], p[1])));
            KetVector::normalize(v, shape.clone())?
        }
    };
    let Some(seed) = lu_seed else {
        return Ok(Some(psi));
    };
    let ua = random_unitary(&SubsystemShape::qubits(&["A0"])?, derive_seed(seed, 0));
    let ub = random_unitary(&SubsystemShape::qubits(&["B0"])?, derive_seed(seed, 1));
    let u = tensor(&[&ua, &ub])?;
    Ok(Some(KetVector::new(psi.apply(&u)?, shape)?))
}

fn design_game(g: &Global, a: &DesignArgs) -> Result<DesignFile, Failure> {
    let cfg = &g.config;
    let psi = build_target(&a.target, cfg.target.as_ref())?
        .ok_or_else(|| Failure::invalid("no target: pass --chi or a config `target` section"))?;
    let penalty = a.penalty.or(cfg.penalty).unwrap_or(DEFAULT_PENALTY);
    let l1 = a.l1.or(cfg.l1).unwrap_or(DEFAULT_L1);
    let ensemble = match a.ensemble {
        Some(EnsembleArg::Tetrahedral) => EnsembleName::Tetrahedral,
        Some(EnsembleArg::Pauli6) => EnsembleName::Pauli6,
        None => cfg.ensemble.unwrap_or(EnsembleName::Tetrahedral),
    };
    let ens = match ensemble {
        EnsembleName::Tetrahedral => tetrahedral_states(),
        EnsembleName::Pauli6 => pauli6_states(),
        EnsembleName::Custom => return Err(Failure::invalid("custom ensembles are not available from the CLI")),
    };
    let game = SemiQuantumGame::design(&psi, penalty, l1, &ens, &ens)?;
    let mut eigenvalues = game.witness.spectrum.eigenvalues.clone();
    eigenvalues.sort_by(|x, y| y.total_cmp(x));
    Ok(DesignFile {
        eigenvalues,
        ensemble,
        penalty,
        game,
    })
}

pub fn load_design(path: &Path) -> Result<SemiQuantumGame, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))?;
    let file: DesignFile = serde_json::from_str(&text)
        .map_err(|e| Failure::invalid(format!("invalid design file {}: {e}", path.display())))?;
    Ok(SemiQuantumGame::new(file.game.witness, file.game.scores)?)
}

fn seesaw_config(g: &Global, a: &SeeSawArgs) -> Result<SeeSawConfig, Failure> {
    let mut cfg = g.config.seesaw.unwrap_or_default();
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    if let Some(m) = a.max_iters {
        cfg.max_iters = m;
    }
    if let Some(t) = a.tol_score {
        cfg.tol_score = t;
    }
    match a.mode {
        Some(ModeArg::RankOne) => cfg.mode = UpdateMode::RankOne,
        Some(ModeArg::PsdRelaxed) => cfg.mode = UpdateMode::PsdRelaxed,
        None => {}
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn design(g: &Global, a: &DesignArgs) -> Result<u8, Failure> {
    let file = design_game(g, a)?;
    write_json(g.out.as_deref(), &file)?;
    Ok(EXIT_PASS)
}

pub fn certify(g: &Global, a: &CertifyArgs) -> Result<u8, Failure> {
    let game = match a.game.as_ref().or(g.config.game.as_ref()) {
        Some(p) => {
            if a.design.target.chi.is_some() || g.config.target.is_some() {
                return Err(Failure::invalid("pass either a game file or a target, not both"));
            }
            load_design(p)?
        }
        None => design_game(g, &a.design)?.game,
    };
    let cfg = seesaw_config(g, &a.seesaw)?;
    let tol = g.tol.unwrap_or(DEFAULT_TOL);
    let opt = seesaw_optimize(&game, &cfg)?;
    let report = certification_report(&opt, &game, tol)?;

    let out = json!({
        "command": "certify",
        "seesaw": cfg,
        "target_chi": game.target_chi,
        "l1": game.l1(),
        "final_score": opt.final_score,
        "converged": opt.converged,
        "converged_restarts": opt.converged_restarts,
        "restart_index": opt.restart_index,
        "iterations": opt.score_trajectory.len(),
        "exceeds_bound": opt.exceeds_bound,
        "report": report,
    });
    write_json(g.out.as_deref(), &out)?;
    if let Some(p) = trajectory_path(g, a.seesaw.trajectory.as_ref()) {
        write_text(Some(&p), &trajectory_csv(&opt.score_trajectory))?;
    }

    if opt.converged_restarts == 0 {
        eprintln!(
            "sqgame: see-saw did not converge in any of {} restarts; best gap {:.3e}",
            cfg.restarts, report.gap
        );
        return Ok(EXIT_NONCONVERGED);
    }
    if report.verdict != Verdict::Certified {
        eprintln!(
            "sqgame: not certified ({})",
            report.first_failure.as_deref().unwrap_or("unknown check")
        );
    }
    Ok(verdict_code(report.verdict == Verdict::Certified))
}

fn load_instance(g: &Global, a: &InstanceArgs) -> Result<Option<SwapInstance>, Failure> {
    let spec = if a.ideal {
        Some(InstanceSpec::Ideal)
    } else if let Some(v) = a.werner {
        Some(InstanceSpec::Werner { visibility: v })
    } else if let Some(seed) = a.random_instance {
        Some(InstanceSpec::Random { seed })
    } else if let Some(path) = &a.instance {
        Some(InstanceSpec::File { path: path.clone() })
    } else {
        g.config.instance.clone()
    };
    let inst = match spec {
        None => return Ok(None),
        Some(InstanceSpec::Ideal) => SwapInstance::ideal(),
        Some(InstanceSpec::Werner { visibility }) => SwapInstance::werner(visibility)?,
        Some(InstanceSpec::Random { seed }) => SwapInstance::random(seed),
        Some(InstanceSpec::File { path }) => {
            let text = fs::read_to_string(&path)
                .map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))?;
            let raw: SwapInstance = serde_json::from_str(&text)
                .map_err(|e| Failure::invalid(format!("malformed instance {}: {e}", path.display())))?;
            SwapInstance::new(raw.rho_a0a, raw.rho_bb0, raw.joint_povm)?
        }
    };
    Ok(Some(inst))
}

pub fn swap(g: &Global, a: &SwapArgs) -> Result<u8, Failure> {
    let psi = build_target(&a.target, g.config.target.as_ref())?.unwrap_or_else(|| phi_plus(["A0", "B0"]));
    let penalty = a.swap_penalty.or(g.config.swap_penalty).unwrap_or(DEFAULT_PENALTY);
    let game = swap_game_operator(&psi, penalty)?;
    let tol = g.tol.unwrap_or(DEFAULT_TOL);
    let optimize = a.optimize || g.config.optimize.unwrap_or(false);

    if optimize {
        let cfg = seesaw_config(g, &a.seesaw)?;
        let opt = swap_optimize(&game, &cfg)?;
        let m1_ok = m1_matches_target(&opt, &game, tol)?;
        let passed = (opt.final_score - SWAP_OPTIMUM).abs() <= tol && m1_ok;
        let out = json!({
            "command": "swap",
            "mode": "optimize",
            "seesaw": cfg,
            "penalty": penalty,
            "expected_optimum": SWAP_OPTIMUM,
            "final_score": opt.final_score,
            "converged": opt.converged,
            "converged_restarts": opt.converged_restarts,
            "restart_index": opt.restart_index,
            "iterations": opt.score_trajectory.len(),
            "m1_matches_target": m1_ok,
            "tol": tol,
            "passed": passed,
            "instance": opt.instance()?,
        });
        write_json(g.out.as_deref(), &out)?;
        if let Some(p) = trajectory_path(g, a.seesaw.trajectory.as_ref()) {
            write_text(Some(&p), &trajectory_csv(&opt.score_trajectory))?;
        }
        if opt.converged_restarts == 0 {
            eprintln!(
                "sqgame: see-saw did not converge in any of {} restarts; best gap {:.3e}",
                cfg.restarts,
                SWAP_OPTIMUM - opt.final_score
            );
            return Ok(EXIT_NONCONVERGED);
        }
        return Ok(verdict_code(passed));
    }

    let inst = load_instance(g, &a.instance)?
        .ok_or_else(|| Failure::invalid("no instance: pass --ideal, --werner, --random-instance, --instance or --optimize"))?;
    let score = swap_score(&game, &inst)?;
    let passed = score <= SWAP_OPTIMUM + tol;
    let out = json!({
        "command": "swap",
        "mode": "evaluate",
        "penalty": penalty,
        "score": score,
        "bound": SWAP_OPTIMUM,
        "attains_bound": (score - SWAP_OPTIMUM).abs() <= tol,
        "tol": tol,
        "passed": passed,
    });
    write_json(g.out.as_deref(), &out)?;
    Ok(verdict_code(passed))
}

pub fn corollary(g: &Global, a: &InstanceArgs) -> Result<u8, Failure> {
    let inst = load_instance(g, a)?
        .ok_or_else(|| Failure::invalid("no instance: pass --ideal, --werner, --random-instance or --instance"))?;
    let tol = g.tol.unwrap_or(DEFAULT_TOL);
    let report = corollary_check(&inst, tol)?;
    write_json(g.out.as_deref(), &json!({ "command": "corollary", "report": report }))?;
    Ok(verdict_code(report.passed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProbeName {
    Theorem1,
    Lemma1,
    Lemma2,
    Lemma3,
    AppendixD,
}

impl ProbeName {
    fn parse(s: &str) -> Result<Self, Failure> {
        match s {
            "theorem1" => Ok(ProbeName::Theorem1),
            "lemma1" => Ok(ProbeName::Lemma1),
            "lemma2" => Ok(ProbeName::Lemma2),
            "lemma3" => Ok(ProbeName::Lemma3),
            "appendixD" => Ok(ProbeName::AppendixD),
            other => Err(Failure::invalid(format!(
                "unknown probe `{other}` (expected theorem1, lemma1, lemma2, lemma3 or appendixD)"
            ))),
        }
    }
}

fn parse_dims(s: &str) -> Result<Vec<(usize, usize)>, Failure> {
    s.split(',')
        .map(|pair| {
            let (a, b) = pair
                .trim()
                .split_once('x')
                .ok_or_else(|| Failure::invalid(format!("bad dimension pair `{pair}`, expected e.g. 2x3")))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Failure::invalid(format!("bad dimension pair `{pair}`")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

pub fn probe(g: &Global, a: &ProbeArgs) -> Result<u8, Failure> {
    let spec = g.config.probe.clone().unwrap_or_default();
    let name = a
        .name
        .clone()
        .or(spec.name)
        .ok_or_else(|| Failure::invalid("no probe name given"))?;
    let which = ProbeName::parse(&name)?;
    let seed = g.seed.unwrap_or(0);
    let n = a.n.or(spec.n);
    let min_mix = a.min_mix.or(spec.min_mix).unwrap_or(0.1);
    let min_angle = a.min_angle.or(spec.min_angle).unwrap_or(FRAC_PI_8);
    let side = match a.side {
        Some(SideArg::Alice) => Side::Alice,
        Some(SideArg::Bob) => Side::Bob,
        None => spec.side.unwrap_or(Side::Alice),
    };

    let mut extra = serde_json::Value::Null;
    let report = match which {
        ProbeName::Theorem1 => theorem1_probe(n.unwrap_or(1000), seed, side)?,
        ProbeName::Lemma1 => lemma1_probe(n.unwrap_or(1000), seed, min_mix, min_angle)?,
        ProbeName::Lemma2 => lemma2_probe(n.unwrap_or(1000), seed, min_angle, side)?,
        ProbeName::Lemma3 => {
            let dims = match (&a.dims, &spec.dims) {
                (Some(s), _) => parse_dims(s)?,
                (None, Some(d)) => d.iter().map(|p| (p[0], p[1])).collect(),
                (None, None) => vec![(2, 2), (2, 3), (3, 3), (4, 4)],
            };
            lemma3_check(n.unwrap_or(10_000), &dims, seed)?
        }
        ProbeName::AppendixD => {
            let scan_n = a.grid_n.or(spec.grid_n).unwrap_or(4000);
            match (a.theta.or(spec.theta), a.gamma.or(spec.gamma)) {
                (Some(theta), Some(gamma)) => {
                    let scan = appendix_d_scan(theta, gamma, scan_n)?;
                    let ok = scan.bounded && scan.consistent;
                    let rep = ProbeReport {
                        probe: "appendix_d".into(),
                        n_samples: 1,
                        violations: usize::from(!ok),
                        worst_value: scan.grid_max,
                        worst_seed: 0,
                        tolerance: scan.grid_tolerance,
                        notes: vec![format!("single point theta = {theta}, gamma = {gamma}")],
                    };
                    extra = serde_json::to_value(&scan).map_err(|e| Failure::invalid(e.to_string()))?;
                    rep
                }
                (None, None) => appendix_d_grid(n.unwrap_or(20), scan_n)?.0,
                _ => return Err(Failure::invalid("appendixD needs both theta and gamma, or neither")),
            }
        }
    };
    let mut out = json!({ "command": "probe", "report": report });
    if !extra.is_null() {
        out["scan"] = extra;
    }
    write_json(g.out.as_deref(), &out)?;
    Ok(verdict_code(report.passed()))
}

pub fn bound(g: &Global, a: &BoundArgs) -> Result<u8, Failure> {
    let spec = g.config.bound.clone().unwrap_or_default();
    let chi = a.chi.or(spec.chi).unwrap_or(FRAC_PI_4);
    let grid_n = a.grid_n.or(spec.grid_n).unwrap_or(200);
    let scan = bound_scan(chi, grid_n)?;
    let limit = SWAP_OPTIMUM + BOUND_SLACK;
    let violations = scan.rows.iter().filter(|p| p.bound > limit).count();
    write_text(g.out.as_deref(), &scan.to_csv())?;
    eprintln!(
        "{}",
        json!({
            "command": "bound",
            "chi": chi,
            "grid_n": grid_n,
            "max": scan.max,
            "limit": limit,
            "violations": violations,
        })
    );
    Ok(verdict_code(violations == 0))
}
