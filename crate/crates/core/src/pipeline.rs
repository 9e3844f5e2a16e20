//! End-to-end verification of an instance and convergence-scaling sweeps.

use serde::{Deserialize, Serialize};

use crate::dynamics::{run, run_observed, DynamicsConfig, Init, MessageState, Pairing, extract_pairing};
use crate::error::{Error, Result};
use crate::instance::{generate, GeneratorSpec, Instance, Topology};
use crate::kt::{check_fp_identities, decompose, KTDecomposition};
use crate::matching::{certify_tight, classify_capped, dual_check, LPClassification, LpKind, DEFAULT_CAP};
use crate::nb::{dotted_labels, fp_from_nb, fp_property_suite, nb_oracle, solve_balance, Dotted, NBSolution, ORACLE_CAP, TOL};

pub const DEGENERATE_NOTE: &str = "degenerate LP: verification skipped beyond dual feasibility";
pub const POINTED_NOTE: &str = "pointed, not tight: no NB solution exists; dual optimum certified";

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub dynamics: DynamicsConfig,
    /// Largest node count classified by corner enumeration; above it the
    /// LP is classified by a dual certificate built from the run.
    pub enumerate_cap: usize,
    pub tol: f64,
    /// Cross-check uniqueness with the brute-force oracle up to this size.
    pub oracle_cap: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { dynamics: DynamicsConfig::default(), enumerate_cap: DEFAULT_CAP, tol: TOL, oracle_cap: ORACLE_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckLine {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub nodes: usize,
    pub edges: usize,
    pub lp: String,
    pub epsilon: Option<f64>,
    pub epsilon_exact: bool,
    pub converged: bool,
    pub iterations: u64,
    pub gamma: Vec<f64>,
    pub gamma_nb: Option<Vec<f64>>,
    pub matching: Vec<(usize, usize)>,
    pub pairing: Option<Pairing>,
    pub sigma: Option<f64>,
    pub levels: Vec<f64>,
    pub unique: Option<bool>,
    pub checks: Vec<CheckLine>,
    pub notes: Vec<String>,
    pub passed: bool,
}

/// Verification report plus the intermediate objects it was built from.
#[derive(Debug, Clone)]
pub struct Verification {
    pub report: VerifyReport,
    pub state: MessageState,
    pub classification: Option<LPClassification>,
    pub solution: Option<NBSolution>,
    pub fixed_point: Option<MessageState>,
    pub decomposition: Option<KTDecomposition>,
}

fn kind_name(kind: LpKind) -> &'static str {
    match kind {
        LpKind::Tight => "tight",
        LpKind::PointedNotTight => "pointed_not_tight",
        LpKind::Degenerate => "degenerate",
    }
}

/// Classify, run from zeros, test the fixed point, certify the NB
/// solution read off it, decompose, and check the structure identities.
pub fn verify(inst: &Instance, config: &VerifyConfig) -> Result<Verification> {
    let tol = config.tol;
    let dyn_cfg = DynamicsConfig { init: Init::Zeros, ..config.dynamics.clone() };
    let outcome = run(inst, &dyn_cfg)?;
    let state = outcome.state;
    let mut checks = vec![CheckLine::new(
        "dynamics_converged",
        outcome.converged,
        format!("{} iterations", outcome.iterations),
    )];
    let mut notes = Vec::new();

    let strong: Vec<usize> = dotted_labels(&state, inst, tol)
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == Dotted::Strong)
        .map(|(e, _)| e)
        .collect();
    let balanced = solve_balance(inst, &strong, &state.earnings);

    let classification = if inst.node_count() <= config.enumerate_cap {
        Some(classify_capped(inst, config.enumerate_cap)?)
    } else {
        let c = certify_tight(inst, &strong, &balanced.gamma, tol);
        if c.is_none() {
            notes.push("LP not certified tight from the run; exact classification needs enumeration".into());
        }
        c
    };

    let mut report = VerifyReport {
        nodes: inst.node_count(),
        edges: inst.edge_count(),
        lp: classification.as_ref().map_or("uncertified", |c| kind_name(c.kind)).to_string(),
        epsilon: classification.as_ref().map(|c| c.epsilon),
        epsilon_exact: classification.as_ref().is_some_and(|c| c.epsilon_exact),
        converged: outcome.converged,
        iterations: outcome.iterations,
        gamma: state.earnings.clone(),
        gamma_nb: None,
        matching: Vec::new(),
        pairing: None,
        sigma: None,
        levels: Vec::new(),
        unique: None,
        checks: Vec::new(),
        notes: Vec::new(),
        passed: false,
    };
    let mut out = Verification {
        report: report.clone(),
        state: state.clone(),
        classification: classification.clone(),
        solution: None,
        fixed_point: None,
        decomposition: None,
    };

    let Some(class) = classification else {
        checks.push(CheckLine::new("lp_classified", false, "dual certificate failed"));
        return Ok(finish(out, report, checks, notes));
    };

    if class.kind == LpKind::Degenerate {
        notes.push(DEGENERATE_NOTE.into());
        let dual = dual_check(&state.earnings, inst, tol);
        checks.push(CheckLine::new(
            "dual_feasible",
            dual.feasible,
            format!("{} violated edges", dual.violations.len()),
        ));
        return Ok(finish(out, report, checks, notes));
    }

    let suite = match fp_property_suite(&state, inst, &class, tol) {
        Ok(s) => s,
        Err(Error::NotFixedPoint { residual, .. }) => {
            checks.push(CheckLine::new("fixed_point", false, format!("residual {residual:e}")));
            return Ok(finish(out, report, checks, notes));
        }
        Err(e) => return Err(e),
    };
    for p in &suite.properties {
        checks.push(CheckLine::new(p.name, p.passed, witness_summary(p.witnesses.len())));
    }
    notes.extend(suite.notes.iter().cloned());
    if class.kind == LpKind::PointedNotTight {
        return Ok(finish(out, report, checks, notes));
    }

    let mut sol = NBSolution::new(strong, balanced.gamma);
    let cert = sol.certify(inst, tol);
    checks.push(CheckLine::new("nb_stable", cert.stable, witness_summary(cert.stability_violations.len())));
    checks.push(CheckLine::new("nb_balanced", cert.balanced, witness_summary(cert.balance.iter().filter(|b| b.residual > tol || !b.nonnegative).count())));
    let drift = state.earnings.iter().zip(&sol.gamma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(CheckLine::new("earnings_match_nb", drift <= tol, format!("max deviation {drift:e}")));
    report.gamma_nb = Some(sol.gamma.clone());
    report.matching = sol.pairs(inst);
    if !sol.certified() {
        out.solution = Some(sol);
        return Ok(finish(out, report, checks, notes));
    }

    let fp = fp_from_nb(&sol, inst)?;
    let decomp = match decompose(&fp, &sol, inst) {
        Ok(d) => d,
        Err(e @ (Error::NonUniqueCycle(_) | Error::UnstableClustering(..))) => {
            notes.push(format!("decomposition: {e}"));
            report.unique = Some(false);
            out.solution = Some(sol);
            out.fixed_point = Some(fp);
            return Ok(finish(out, report, checks, notes));
        }
        Err(e) => return Err(e),
    };
    report.levels = decomp.levels.clone();
    report.sigma = decomp.gap;
    let identities = check_fp_identities(&decomp, &fp, inst, tol);
    checks.push(CheckLine::new(
        "structure_identities",
        identities.passed,
        witness_summary(identities.failures().count()),
    ));
    // Cycle structures were rejected above, so every level set is pinned.
    report.unique = Some(true);
    match decomp.gap {
        Some(g) if g > 0.0 => report.pairing = Some(extract_pairing(&state, inst, g / 3.0)),
        Some(g) => notes.push(format!("no positive gap: smallest gap term is {g:e}")),
        None => {}
    }
    if inst.node_count() <= config.oracle_cap {
        let oracle = nb_oracle(inst)?;
        checks.push(CheckLine::new(
            "oracle_uniqueness",
            oracle.solutions.len() == 1 && !oracle.family,
            format!("{} oracle solutions", oracle.solutions.len()),
        ));
    }
    out.solution = Some(sol);
    out.fixed_point = Some(fp);
    out.decomposition = Some(decomp);
    Ok(finish(out, report, checks, notes))
}

fn witness_summary(n: usize) -> String {
    if n == 0 {
        String::new()
    } else {
        format!("{n} witnesses")
    }
}

fn finish(mut out: Verification, mut report: VerifyReport, checks: Vec<CheckLine>, notes: Vec<String>) -> Verification {
    report.passed = checks.iter().all(|c| c.passed);
    report.checks = checks;
    report.notes = notes;
    out.report = report;
    out
}

/// Sweep over instance sizes with repeated seeded instances per size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub family: GeneratorSpec,
    pub sizes: Vec<usize>,
    pub eps: f64,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "half")]
    pub kappa: f64,
    #[serde(default = "million")]
    pub max_iters: u64,
    /// Reference constant in `t* = C·n⁷(W/σ + ln(1 + σ/ε))`.
    #[serde(default = "one_f")]
    pub c_ref: f64,
    /// Instances with a smaller gap are regenerated.
    #[serde(default)]
    pub min_gap: f64,
    #[serde(default = "hundred")]
    pub max_regenerations: usize,
    /// Start each run from zero messages instead of a seeded random vector.
    #[serde(default)]
    pub zero_init: bool,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn million() -> u64 {
    1_000_000
}
fn hundred() -> usize {
    100
}

impl ExperimentSpec {
    pub fn new(family: GeneratorSpec, sizes: Vec<usize>, eps: f64) -> Self {
        Self {
            family,
            sizes,
            eps,
            repetitions: 1,
            seed: 0,
            kappa: 0.5,
            max_iters: 1_000_000,
            c_ref: 1.0,
            min_gap: 0.0,
            max_regenerations: 100,
            zero_init: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("sizes must be non-empty and strictly increasing".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("eps must be positive".into()));
        }
        Ok(())
    }
}

/// Family template with its size parameter set to `size`.
pub fn sized(topology: &Topology, size: usize) -> Topology {
    match topology.clone() {
        Topology::Path { .. } => Topology::Path { len: size },
        Topology::EvenCycle { .. } => Topology::EvenCycle { len: size },
        Topology::OddCycle { .. } => Topology::OddCycle { len: size },
        Topology::Blossom { cycle, .. } => Topology::Blossom { stem: size, cycle },
        Topology::Bicycle { cycle_a, cycle_b, .. } => Topology::Bicycle { cycle_a, path: size, cycle_b },
        Topology::BipartiteRandom { p, .. } => Topology::BipartiteRandom { left: size, right: size, p },
        Topology::ErdosRenyi { p, .. } => Topology::ErdosRenyi { n: size, p },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub n: usize,
    #[serde(rename = "W")]
    pub w: f64,
    pub sigma: f64,
    pub eps: f64,
    pub iterations_to_eps: Option<u64>,
    pub t_star_reference: f64,
    pub seed: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub regenerations: usize,
    /// Least-squares slope of `ln(iterations)` against `ln(n)` over
    /// converged rows; `None` with fewer than two distinct sizes.
    pub loglog_slope: Option<f64>,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,W,sigma,eps,iterations_to_eps,t_star_reference,seed,converged\n");
        for r in &self.rows {
            let iters = r.iterations_to_eps.map_or(String::new(), |t| t.to_string());
            out.push_str(&format!(
                "{},{},{},{:e},{},{:e},{},{}\n",
                r.n, r.w, r.sigma, r.eps, iters, r.t_star_reference, r.seed, r.converged
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let slope = self.loglog_slope.map_or("n/a".to_string(), |s| format!("{s:.4}"));
        let failed = self.rows.iter().filter(|r| !r.converged).count();
        format!(
            "rows={} unconverged={} regenerations={} loglog_slope={}",
            self.rows.len(),
            failed,
            self.regenerations,
            slope
        )
    }
}

/// A tight instance with a unique NB solution and positive gap.
#[derive(Debug, Clone)]
pub struct Qualified {
    pub instance: Instance,
    pub gamma_nb: Vec<f64>,
    pub matching: Vec<usize>,
    pub sigma: f64,
}

/// Returns `Some` when the instance is tight, its NB solution certifies,
/// the decomposition has a gap of at least `min_gap`, and (for small
/// instances) the oracle agrees the solution is unique.
pub fn qualify(inst: &Instance, kappa: f64, max_iters: u64, min_gap: f64) -> Result<Option<Qualified>> {
    let cfg = VerifyConfig {
        dynamics: DynamicsConfig { kappa, max_iters, ..DynamicsConfig::default() },
        ..VerifyConfig::default()
    };
    let v = verify(inst, &cfg)?;
    let tight = v.classification.as_ref().is_some_and(|c| c.kind == LpKind::Tight);
    if !tight || !v.report.passed {
        return Ok(None);
    }
    match (v.solution, v.report.sigma) {
        (Some(sol), Some(sigma)) if sigma > 0.0 && sigma >= min_gap => Ok(Some(Qualified {
            instance: inst.clone(),
            gamma_nb: sol.gamma,
            matching: sol.matching,
            sigma,
        })),
        _ => Ok(None),
    }
}

/// First `t` with `‖γ^t - γ*‖∞ ≤ eps` when started from `init`.
pub fn iterations_to_eps(
    inst: &Instance,
    init: &Init,
    gamma_star: &[f64],
    eps: f64,
    kappa: f64,
    max_iters: u64,
) -> Result<Option<u64>> {
    let cfg =
        DynamicsConfig { kappa, max_iters, eps_conv: f64::MIN_POSITIVE, init: init.clone(), ..DynamicsConfig::default() };
    let dist = |g: &[f64]| g.iter().zip(gamma_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let start = crate::dynamics::derive(&init.materialize(inst)?, inst)?;
    if dist(&start.earnings) <= eps {
        return Ok(Some(0));
    }
    let mut hit = None;
    let outcome = run_observed(inst, &cfg, |engine| {
        if dist(engine.earnings()) <= eps {
            hit = Some(engine.time());
            false
        } else {
            true
        }
    })?;
    // A step that lands exactly on the fixed point ends the run before
    // the observer sees it.
    if hit.is_none() && dist(&outcome.state.earnings) <= eps {
        hit = Some(outcome.iterations);
    }
    Ok(hit)
}

pub fn experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut regenerations = 0;
    for &size in &spec.sizes {
        for rep in 0..spec.repetitions {
            let base = spec.seed.wrapping_add((size as u64) << 20).wrapping_add(rep as u64);
            let mut attempt = 0;
            let (seed, q) = loop {
                let seed = base.wrapping_add((attempt as u64) << 40);
                let gen = GeneratorSpec { topology: sized(&spec.family.topology, size), seed, ..spec.family.clone() };
                let inst = generate(&gen)?;
                if let Some(q) = qualify(&inst, spec.kappa, spec.max_iters, spec.min_gap)? {
                    break (seed, q);
                }
                attempt += 1;
                regenerations += 1;
                if attempt > spec.max_regenerations {
                    return Err(Error::InvalidGenerator(format!(
                        "no qualifying instance at size {size} after {attempt} attempts"
                    )));
                }
            };
            let inst = &q.instance;
            let init = if spec.zero_init { Init::Zeros } else { Init::UniformRandom { seed } };
            let hit = iterations_to_eps(inst, &init, &q.gamma_nb, spec.eps, spec.kappa, spec.max_iters)?;
            let n = inst.node_count();
            let w = inst.max_weight();
            let t_star = spec.c_ref * (n as f64).powi(7) * (w / q.sigma + (1.0 + q.sigma / spec.eps).ln());
            rows.push(ExperimentRow {
                n,
                w,
                sigma: q.sigma,
                eps: spec.eps,
                iterations_to_eps: hit,
                t_star_reference: t_star,
                seed,
                converged: hit.is_some(),
            });
        }
    }
    rows.sort_by_key(|r| (r.n, r.seed));
    let loglog_slope = loglog_fit(&rows);
    Ok(ExperimentResult { rows, regenerations, loglog_slope })
}

fn loglog_fit(rows: &[ExperimentRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.iterations_to_eps.filter(|&t| t > 0).map(|t| ((r.n as f64).ln(), (t as f64).ln())))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if pts.len() < 2 || sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::WeightScheme;

    fn e2() -> Instance {
        Instance::new(3, [(0, 1, 2.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn verify_e2() {
        let v = verify(&e2(), &VerifyConfig::default()).unwrap();
        let r = &v.report;
        assert!(r.passed, "{:?}", r.checks);
        for (g, want) in r.gamma_nb.as_ref().unwrap().iter().zip([0.5, 1.5, 0.0]) {
            assert!((g - want).abs() < 1e-9);
        }
        assert!((r.sigma.unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(r.pairing.as_ref().unwrap().pairs, vec![(0, 1)]);
    }

    #[test]
    fn verify_triangle() {
        let t1 = Instance::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let r = verify(&t1, &VerifyConfig::default()).unwrap().report;
        assert!(r.passed, "{:?}", r.checks);
        assert!(r.notes.iter().any(|n| n == POINTED_NOTE));
        assert_eq!(r.lp, "pointed_not_tight");
    }

    #[test]
    fn verify_degenerate_path() {
        let p = Instance::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let r = verify(&p, &VerifyConfig::default()).unwrap().report;
        assert!(r.passed, "{:?}", r.checks);
        assert_eq!(r.notes, vec![DEGENERATE_NOTE.to_string()]);
    }

    #[test]
    fn tighter_eps_needs_more_iterations() {
        let inst = e2();
        let g = [0.5, 1.5, 0.0];
        let its: Vec<u64> =
            [1e-2, 1e-4, 1e-6].iter().map(|&e| iterations_to_eps(&inst, &Init::Zeros, &g, e, 0.5, 1_000_000).unwrap().unwrap()).collect();
        assert!(its.windows(2).all(|w| w[0] <= w[1]), "{its:?}");
    }

    #[test]
    fn path_sweep_converges() {
        let family = GeneratorSpec::new(Topology::Path { len: 0 }, WeightScheme::Default { jitter: Some(0.0) }, 3);
        let spec = ExperimentSpec::new(family, vec![5, 10, 20], 1e-4);
        let res = experiment(&spec).unwrap();
        assert_eq!(res.rows.len(), 3);
        assert!(res.rows.iter().all(|r| r.converged && r.iterations_to_eps.is_some()));
        assert!(res.to_csv().starts_with("n,W,sigma,eps,iterations_to_eps,t_star_reference,seed,converged\n"));
        assert_eq!(experiment(&spec).unwrap(), res);
    }

    #[test]
    fn spec_validation() {
        let family = GeneratorSpec::new(Topology::Path { len: 0 }, WeightScheme::Default { jitter: None }, 3);
        assert!(ExperimentSpec::new(family.clone(), vec![5, 5], 1e-4).validate().is_err());
        let mut s = ExperimentSpec::new(family, vec![5], 1e-4);
        s.repetitions = 0;
        assert!(s.validate().is_err());
    }
}
