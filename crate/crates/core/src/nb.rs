//! Nash bargaining solutions: certification, the fixed-point property suite,
//! the fixed point built from a solution, and a brute-force oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{derive, fixed_point_residual, MessageState};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::matching::{dual_check_against, solid_labels, LPClassification, LpKind, Solid};

/// Certification tolerance for converged numerical states.
pub const TOL: f64 = 1e-6;
/// Tolerance for exactly constructed fixed points.
pub const TOL_FP: f64 = 1e-9;
/// Default node cap for [`nb_oracle`].
pub const ORACLE_CAP: usize = 10;
/// Solutions closer than this in sup norm are the same solution.
pub const DISTINCT: f64 = 1e-4;

/// A matching (edge ids) with an allocation and certification flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NBSolution {
    pub matching: Vec<usize>,
    pub gamma: Vec<f64>,
    pub stable: bool,
    pub balanced: bool,
}

impl NBSolution {
    /// Uncertified solution; the matching is sorted.
    pub fn new(mut matching: Vec<usize>, gamma: Vec<f64>) -> Self {
        matching.sort_unstable();
        matching.dedup();
        Self { matching, gamma, stable: false, balanced: false }
    }

    /// Runs stability and balance checks and records the verdict.
    pub fn certify(&mut self, inst: &Instance, tol: f64) -> Certification {
        let cert = certify(self, inst, tol);
        self.stable = cert.stable;
        self.balanced = cert.balanced;
        cert
    }

    pub fn certified(&self) -> bool {
        self.stable && self.balanced
    }

    /// Matching as `(u, v)` pairs.
    pub fn pairs(&self, inst: &Instance) -> Vec<(usize, usize)> {
        self.matching.iter().map(|&e| (inst.edge(e).u, inst.edge(e).v)).collect()
    }

    /// Partner of each node under the matching.
    pub fn partners(&self, inst: &Instance) -> Vec<Option<usize>> {
        let mut p = vec![None; inst.node_count()];
        for &e in &self.matching {
            let edge = inst.edge(e);
            p[edge.u] = Some(edge.v);
            p[edge.v] = Some(edge.u);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeDeficit {
    pub u: usize,
    pub v: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceResidual {
    pub u: usize,
    pub v: usize,
    /// `γ_u - best alternative of u`.
    pub lhs: f64,
    /// `γ_v - best alternative of v`.
    pub rhs: f64,
    pub residual: f64,
    pub nonnegative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certification {
    /// Outcome constraints: matching disjoint, `γ ≥ 0`, matched pairs split
    /// their weight, unmatched nodes earn nothing.
    pub outcome_issues: Vec<String>,
    pub stability_violations: Vec<EdgeDeficit>,
    pub balance: Vec<BalanceResidual>,
    pub stable: bool,
    pub balanced: bool,
    pub tol: f64,
}

/// `max_{k in ∂i \ j} (w_ik - γ_k)_+`; `exclude = None` takes all neighbors.
pub fn best_alternative(inst: &Instance, gamma: &[f64], i: usize, exclude: Option<usize>) -> f64 {
    inst.out_arcs(i)
        .iter()
        .map(|&a| inst.arc(a))
        .filter(|arc| Some(arc.to) != exclude)
        .map(|arc| (inst.edge(arc.edge).w - gamma[arc.to]).max(0.0))
        .fold(0.0, f64::max)
}

fn outcome_issues(sol: &NBSolution, inst: &Instance, tol: f64) -> Vec<String> {
    let mut issues = Vec::new();
    if sol.gamma.len() != inst.node_count() {
        issues.push(format!("gamma has {} entries for {} nodes", sol.gamma.len(), inst.node_count()));
        return issues;
    }
    if !crate::matching::is_matching(inst, &sol.matching) {
        issues.push("edges of the matching are not disjoint".into());
    }
    let partners = sol.partners(inst);
    for (i, &g) in sol.gamma.iter().enumerate() {
        if g < -tol {
            issues.push(format!("node {i} earns {g} < 0"));
        }
        if partners[i].is_none() && g.abs() > tol {
            issues.push(format!("unmatched node {i} earns {g}"));
        }
    }
    for &e in &sol.matching {
        let edge = inst.edge(e);
        let s = sol.gamma[edge.u] + sol.gamma[edge.v];
        if (s - edge.w).abs() > tol {
            issues.push(format!("matched edge ({}, {}) splits {s} of {}", edge.u, edge.v, edge.w));
        }
    }
    issues
}

/// Non-matching edges with `γ_u + γ_v < w - tol`.
pub fn check_stability(sol: &NBSolution, inst: &Instance, tol: f64) -> Vec<EdgeDeficit> {
    let mut in_m = vec![false; inst.edge_count()];
    for &e in &sol.matching {
        in_m[e] = true;
    }
    inst.edges()
        .iter()
        .enumerate()
        .filter(|&(e, edge)| !in_m[e] && sol.gamma[edge.u] + sol.gamma[edge.v] < edge.w - tol)
        .map(|(_, edge)| EdgeDeficit { u: edge.u, v: edge.v, value: edge.w - sol.gamma[edge.u] - sol.gamma[edge.v] })
        .collect()
}

fn balance_at(inst: &Instance, gamma: &[f64], u: usize, v: usize, tol: f64) -> BalanceResidual {
    let lhs = gamma[u] - best_alternative(inst, gamma, u, Some(v));
    let rhs = gamma[v] - best_alternative(inst, gamma, v, Some(u));
    BalanceResidual { u, v, lhs, rhs, residual: (lhs - rhs).abs(), nonnegative: lhs >= -tol && rhs >= -tol }
}

/// Balance residual on every matched edge.
pub fn check_balance(sol: &NBSolution, inst: &Instance, tol: f64) -> Vec<BalanceResidual> {
    sol.matching
        .iter()
        .map(|&e| balance_at(inst, &sol.gamma, inst.edge(e).u, inst.edge(e).v, tol))
        .collect()
}

pub fn certify(sol: &NBSolution, inst: &Instance, tol: f64) -> Certification {
    let outcome_issues = outcome_issues(sol, inst, tol);
    if sol.gamma.len() != inst.node_count() {
        return Certification {
            outcome_issues,
            stability_violations: vec![],
            balance: vec![],
            stable: false,
            balanced: false,
            tol,
        };
    }
    let stability_violations = check_stability(sol, inst, tol);
    let balance = check_balance(sol, inst, tol);
    let stable = outcome_issues.is_empty() && stability_violations.is_empty();
    let balanced = balance.iter().all(|b| b.residual <= tol && b.nonnegative);
    Certification { outcome_issues, stability_violations, balance, stable, balanced, tol }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dotted {
    Strong,
    Weak,
    Non,
}

/// A failing location for a property.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum Witness {
    Edge { u: usize, v: usize, detail: String },
    Node { i: usize, detail: String },
    Global { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
}

impl PropertyCheck {
    fn new(name: &'static str, witnesses: Vec<Witness>) -> Self {
        Self { name, passed: witnesses.is_empty(), witnesses }
    }
}

pub mod property {
    pub const PARTNER_EQUIVALENCE: &str = "partner_equivalence";
    pub const UNIQUE_PARTNER: &str = "unique_partner";
    pub const DOTTED_ADJACENCY: &str = "dotted_adjacency";
    pub const UNDOTTED_EARNS_ZERO: &str = "undotted_earns_zero";
    pub const ALPHA_EQUALS_GAMMA: &str = "alpha_equals_gamma_off_strong";
    pub const OFFER_FORMULA: &str = "offer_formula";
    pub const BALANCE_EVERY_EDGE: &str = "balance_every_edge";
    pub const DUAL_OPTIMAL: &str = "dual_optimal";
    pub const SOLID_DOTTED: &str = "solid_dotted_correspondence";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub properties: Vec<PropertyCheck>,
    pub labels: Vec<Dotted>,
    pub strong_dotted: Vec<usize>,
    pub weak_dotted: Vec<usize>,
    pub non_dotted: Vec<usize>,
    /// Undamped fixed-point residual of the state.
    pub residual: f64,
    pub tol: f64,
    pub nb_exists: bool,
    pub notes: Vec<String>,
}

impl FixedPointReport {
    pub fn all_pass(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.properties.iter().find(|p| p.name == name)
    }

    /// The strong-dotted edges with the state's earnings, as a candidate
    /// NB solution (uncertified).
    pub fn candidate(&self, state: &MessageState) -> NBSolution {
        NBSolution::new(self.strong_dotted.clone(), state.earnings.clone())
    }
}

/// Dotted label of every edge: sign of `w - α_ij - α_ji` with a `tol` band.
pub fn dotted_labels(state: &MessageState, inst: &Instance, tol: f64) -> Vec<Dotted> {
    inst.edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let s = edge.w - state.alpha[2 * e] - state.alpha[2 * e + 1];
            if s > tol {
                Dotted::Strong
            } else if s >= -tol {
                Dotted::Weak
            } else {
                Dotted::Non
            }
        })
        .collect()
}

/// Runs the full property suite on a fixed point.
pub fn fp_property_suite(
    state: &MessageState,
    inst: &Instance,
    classification: &LPClassification,
    tol: f64,
) -> Result<FixedPointReport> {
    if classification.kind == LpKind::Degenerate {
        return Err(Error::Degenerate);
    }
    let residual = fixed_point_residual(&state.alpha, inst)?;
    if residual > tol {
        return Err(Error::NotFixedPoint { residual, tol });
    }
    evaluate_properties(state, inst, classification, tol)
}

/// Evaluates every property without requiring a fixed point. Useful to
/// see which properties a perturbed state breaks.
pub fn evaluate_properties(
    state: &MessageState,
    inst: &Instance,
    classification: &LPClassification,
    tol: f64,
) -> Result<FixedPointReport> {
    let residual = fixed_point_residual(&state.alpha, inst)?;
    let (alpha, offers, gamma) = (&state.alpha, &state.offers, &state.earnings);
    let labels = dotted_labels(state, inst, tol);
    let close = |a: f64, b: f64| (a - b).abs() <= tol;
    let edge_w = |u: usize, v: usize, detail: String| Witness::Edge { u, v, detail };

    let partners: Vec<Vec<usize>> = (0..inst.node_count())
        .map(|i| {
            inst.out_arcs(i)
                .iter()
                .map(|&a| inst.arc(a))
                .filter(|arc| close(gamma[i] + gamma[arc.to], inst.edge(arc.edge).w))
                .map(|arc| arc.to)
                .collect()
        })
        .collect();

    let mut partner_eq = Vec::new();
    let mut unique = Vec::new();
    let mut alpha_gamma = Vec::new();
    let mut balance = Vec::new();
    for (e, edge) in inst.edges().iter().enumerate() {
        let (u, v, w) = (edge.u, edge.v, edge.w);
        let (auv, avu) = (alpha[2 * e], alpha[2 * e + 1]);
        let (muv, mvu) = (offers[2 * e], offers[2 * e + 1]);
        let surplus = w - auv - avu;

        let a = close(gamma[u] + gamma[v], w);
        let b = surplus >= -tol;
        let c = close(gamma[u], mvu) && close(gamma[v], muv);
        if !(a == b && b == c) {
            partner_eq.push(edge_w(u, v, format!("partners={a} nonneg_surplus={b} offers_match={c}")));
        }
        // One-sided match forces the matched side to earn nothing.
        for (i, j, m_in, m_out) in [(u, v, mvu, muv), (v, u, muv, mvu)] {
            if close(gamma[i], m_in) && gamma[j] > m_out + tol && gamma[i].abs() > tol {
                partner_eq.push(edge_w(i, j, format!("one-sided offer match but gamma={}", gamma[i])));
            }
        }

        let pa = partners[u] == [v];
        let pb = partners[v] == [u];
        let pc = surplus > tol;
        if !(pa == pb && pb == pc) {
            unique.push(edge_w(u, v, format!("P(u)={{v}}:{pa} P(v)={{u}}:{pb} strong:{pc}")));
        }

        for (i, j, a_ij, m_ij) in [(u, v, auv, muv), (v, u, avu, mvu)] {
            let a = close(a_ij, gamma[i]);
            let b = surplus <= tol;
            let c = close(m_ij, (w - a_ij).max(0.0));
            if !(a == b && b == c) {
                alpha_gamma.push(edge_w(i, j, format!("alpha=gamma:{a} surplus<=0:{b} offer=(w-alpha)+:{c}")));
            }
        }

        let r = balance_at(inst, gamma, u, v, tol);
        if r.residual > tol || !r.nonnegative {
            balance.push(edge_w(u, v, format!("lhs={} rhs={}", r.lhs, r.rhs)));
        }
    }

    let mut adjacency = Vec::new();
    for (e, edge) in inst.edges().iter().enumerate() {
        let touching = |i: usize| {
            inst.out_arcs(i).iter().map(|&a| inst.arc(a).edge).filter(move |&f| f != e).map(|f| labels[f])
        };
        match labels[e] {
            Dotted::Strong => {
                if touching(edge.u).chain(touching(edge.v)).any(|l| l != Dotted::Non) {
                    adjacency.push(edge_w(edge.u, edge.v, "strong-dotted edge touches a dotted edge".into()));
                }
            }
            Dotted::Weak => {
                for i in [edge.u, edge.v] {
                    if !touching(i).any(|l| l == Dotted::Weak) {
                        adjacency.push(edge_w(edge.u, edge.v, format!("weak-dotted edge has no weak continuation at {i}")));
                    }
                }
            }
            Dotted::Non => {}
        }
    }

    let mut undotted = Vec::new();
    for i in 0..inst.node_count() {
        let dotted = inst.out_arcs(i).iter().any(|&a| labels[inst.arc(a).edge] != Dotted::Non);
        if !dotted && gamma[i].abs() > tol {
            undotted.push(Witness::Node { i, detail: format!("gamma={}", gamma[i]) });
        }
    }

    let mut offer_formula = Vec::new();
    for (a, arc) in inst.arcs().iter().enumerate() {
        let want = (inst.edge(arc.edge).w - gamma[arc.from]).max(0.0);
        if !close(offers[a], want) {
            offer_formula.push(edge_w(arc.from, arc.to, format!("offer={} (w-gamma)+={want}", offers[a])));
        }
    }

    let dual = dual_check_against(gamma, inst, classification.optimum.weight, tol);
    let mut dual_w = Vec::new();
    if dual.optimal != Some(true) {
        dual_w.push(Witness::Global {
            detail: format!(
                "feasible={} objective={} primal={}",
                dual.feasible, dual.objective, classification.optimum.weight
            ),
        });
    }

    let mut solid = Vec::new();
    let mut notes = Vec::new();
    match solid_labels(classification) {
        Ok(sl) => {
            for (e, edge) in inst.edges().iter().enumerate() {
                let ok = matches!(
                    (sl[e], labels[e]),
                    (Solid::OneSolid, Dotted::Strong) | (Solid::HalfSolid, Dotted::Weak) | (Solid::NonSolid, Dotted::Non)
                );
                if !ok {
                    solid.push(edge_w(edge.u, edge.v, format!("{:?} vs {:?}", sl[e], labels[e])));
                }
            }
        }
        Err(_) => notes.push("degenerate LP: solid labels unavailable".into()),
    }

    let nb_exists = classification.kind == LpKind::Tight;
    if !nb_exists {
        notes.push("pointed, not tight: no NB solution exists; dual optimum certified".into());
    }

    let by = |l: Dotted| (0..labels.len()).filter(|&e| labels[e] == l).collect::<Vec<_>>();
    Ok(FixedPointReport {
        properties: vec![
            PropertyCheck::new(property::PARTNER_EQUIVALENCE, partner_eq),
            PropertyCheck::new(property::UNIQUE_PARTNER, unique),
            PropertyCheck::new(property::DOTTED_ADJACENCY, adjacency),
            PropertyCheck::new(property::UNDOTTED_EARNS_ZERO, undotted),
            PropertyCheck::new(property::ALPHA_EQUALS_GAMMA, alpha_gamma),
            PropertyCheck::new(property::OFFER_FORMULA, offer_formula),
            PropertyCheck::new(property::BALANCE_EVERY_EDGE, balance),
            PropertyCheck::new(property::DUAL_OPTIMAL, dual_w),
            PropertyCheck::new(property::SOLID_DOTTED, solid),
        ],
        strong_dotted: by(Dotted::Strong),
        weak_dotted: by(Dotted::Weak),
        non_dotted: by(Dotted::Non),
        labels,
        residual,
        tol,
        nb_exists,
        notes,
    })
}

/// Fixed point built from a certified NB solution:
/// `m_ij = (w_ij - γ_i)_+`, `α_ij = max_{k in ∂i \ j} m_ki`.
pub fn fp_from_nb(sol: &NBSolution, inst: &Instance) -> Result<MessageState> {
    if !sol.certified() {
        return Err(Error::Uncertified("solution must be certified stable and balanced".into()));
    }
    Ok(fp_from_gamma(&sol.gamma, inst))
}

/// The same construction without the certification gate.
pub fn fp_from_gamma(gamma: &[f64], inst: &Instance) -> MessageState {
    let alpha: Vec<f64> = inst
        .arcs()
        .iter()
        .map(|arc| best_alternative(inst, gamma, arc.from, Some(arc.to)))
        .collect();
    derive(&alpha, inst).expect("alpha sized to the instance")
}

/// Outcome of a balance solve on a fixed matching.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSolve {
    pub gamma: Vec<f64>,
    pub sweeps: u64,
    pub converged: bool,
}

/// Damped Gauss–Seidel solve of the balance equations on `matching`,
/// starting from `seed` (unmatched nodes are pinned at 0).
pub fn solve_balance(inst: &Instance, matching: &[usize], seed: &[f64]) -> BalanceSolve {
    const DAMP: f64 = 0.5;
    const MAX_SWEEPS: u64 = 100_000;
    const STOP: f64 = 1e-14;
    let mut gamma = vec![0.0; inst.node_count()];
    for &e in matching {
        let edge = inst.edge(e);
        let g = seed[edge.u].clamp(0.0, edge.w);
        gamma[edge.u] = g;
        gamma[edge.v] = edge.w - g;
    }
    for sweep in 1..=MAX_SWEEPS {
        let mut change = 0.0f64;
        for &e in matching {
            let edge = *inst.edge(e);
            let alt_u = best_alternative(inst, &gamma, edge.u, Some(edge.v));
            let alt_v = best_alternative(inst, &gamma, edge.v, Some(edge.u));
            let target = (0.5 * (edge.w + alt_u - alt_v)).clamp(0.0, edge.w);
            let next = DAMP * gamma[edge.u] + (1.0 - DAMP) * target;
            change = change.max((next - gamma[edge.u]).abs());
            gamma[edge.u] = next;
            gamma[edge.v] = edge.w - next;
        }
        if change <= STOP * (1.0 + inst.max_weight()) {
            return BalanceSolve { gamma, sweeps: sweep, converged: true };
        }
    }
    BalanceSolve { gamma, sweeps: MAX_SWEEPS, converged: false }
}

/// Seeds for the balance solver: zeros, lower endpoint takes all, upper
/// endpoint takes all, then a few seeded random splits.
pub fn balance_seeds(inst: &Instance, matching: &[usize], random: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = inst.node_count();
    let mut seeds = vec![vec![0.0; n]];
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    for &e in matching {
        let edge = inst.edge(e);
        left[edge.u] = edge.w;
        right[edge.v] = edge.w;
    }
    seeds.push(left);
    seeds.push(right);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let mut s = vec![0.0; n];
        for &e in matching {
            let edge = inst.edge(e);
            s[edge.u] = rng.random::<f64>() * edge.w;
        }
        seeds.push(s);
    }
    seeds
}

/// Oracle output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Distinct certified solutions, ordered by matching then by γ.
    pub solutions: Vec<NBSolution>,
    /// Some matching carries a segment of solutions.
    pub family: bool,
    /// Matchings on which some balance solve hit the sweep cap.
    pub unconverged: Vec<Vec<usize>>,
}

/// All maximal matchings, each sorted, in lexicographic order.
pub fn maximal_matchings(inst: &Instance) -> Vec<Vec<usize>> {
    fn rec(inst: &Instance, e: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if e == inst.edge_count() {
            let maximal = inst.edges().iter().all(|x| used[x.u] || used[x.v]);
            if maximal {
                out.push(cur.clone());
            }
            return;
        }
        let edge = *inst.edge(e);
        if !used[edge.u] && !used[edge.v] {
            used[edge.u] = true;
            used[edge.v] = true;
            cur.push(e);
            rec(inst, e + 1, used, cur, out);
            cur.pop();
            used[edge.u] = false;
            used[edge.v] = false;
        }
        rec(inst, e + 1, used, cur, out);
    }
    let mut out = Vec::new();
    rec(inst, 0, &mut vec![false; inst.node_count()], &mut Vec::new(), &mut out);
    out.sort();
    out
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Enumerates NB solutions by brute force over maximal matchings.
pub fn nb_oracle(inst: &Instance) -> Result<OracleResult> {
    nb_oracle_capped(inst, ORACLE_CAP)
}

pub fn nb_oracle_capped(inst: &Instance, cap: usize) -> Result<OracleResult> {
    if inst.node_count() > cap {
        return Err(Error::SizeCap { n: inst.node_count(), cap });
    }
    let mut result = OracleResult { solutions: vec![], family: false, unconverged: vec![] };
    for m in maximal_matchings(inst) {
        let mut found: Vec<NBSolution> = Vec::new();
        let mut stalled = false;
        for seed in balance_seeds(inst, &m, 4, 0x5eed) {
            let solve = solve_balance(inst, &m, &seed);
            stalled |= !solve.converged;
            let mut sol = NBSolution::new(m.clone(), solve.gamma);
            sol.certify(inst, 1e-7);
            if sol.certified() && found.iter().all(|f| sup(&f.gamma, &sol.gamma) > DISTINCT) {
                found.push(sol);
            }
        }
        if stalled {
            result.unconverged.push(m.clone());
        }
        'family: for a in 0..found.len() {
            for b in a + 1..found.len() {
                let mid: Vec<f64> = found[a].gamma.iter().zip(&found[b].gamma).map(|(x, y)| 0.5 * (x + y)).collect();
                let mut s = NBSolution::new(m.clone(), mid);
                if s.certify(inst, 1e-7).stable && s.balanced {
                    result.family = true;
                    break 'family;
                }
            }
        }
        found.sort_by(|x, y| x.gamma.partial_cmp(&y.gamma).expect("finite"));
        result.solutions.extend(found);
    }
    Ok(result)
}
