//! Max-weight matching LP relaxation solved by brute force over its
//! half-integral corners, plus dual checks.
//!
//! Corners of the fractional matching polytope are a matching plus
//! vertex-disjoint odd cycles carrying ½ on every edge. Enumeration is
//! exponential and capped by node count.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Default node cap for exhaustive enumeration.
pub const DEFAULT_CAP: usize = 12;
/// Comparison tolerance for corner weights.
pub const LP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Solid {
    OneSolid,
    HalfSolid,
    NonSolid,
}

/// A corner: per-edge value in `{0, ½, 1}` stored as twice the value.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfIntegralSolution {
    twice: Vec<u8>,
    pub weight: f64,
}

impl HalfIntegralSolution {
    pub fn from_twice(inst: &Instance, twice: Vec<u8>) -> Self {
        let weight = twice.iter().zip(inst.edges()).map(|(&x, e)| f64::from(x) * 0.5 * e.w).sum();
        Self { twice, weight }
    }

    /// Integral solution from a set of edge ids.
    pub fn from_matching(inst: &Instance, edges: &[usize]) -> Self {
        let mut twice = vec![0; inst.edge_count()];
        for &e in edges {
            twice[e] = 2;
        }
        Self::from_twice(inst, twice)
    }

    pub fn value(&self, e: usize) -> f64 {
        f64::from(self.twice[e]) * 0.5
    }

    pub fn is_integral(&self) -> bool {
        self.twice.iter().all(|&x| x != 1)
    }

    /// Edges with positive value.
    pub fn support(&self) -> Vec<usize> {
        (0..self.twice.len()).filter(|&e| self.twice[e] > 0).collect()
    }

    /// Edges at value 1.
    pub fn matched(&self) -> Vec<usize> {
        (0..self.twice.len()).filter(|&e| self.twice[e] == 2).collect()
    }

    pub fn label(&self, e: usize) -> Solid {
        match self.twice[e] {
            2 => Solid::OneSolid,
            1 => Solid::HalfSolid,
            _ => Solid::NonSolid,
        }
    }

    /// Every node constraint holds.
    pub fn is_feasible(&self, inst: &Instance) -> bool {
        let mut load = vec![0u32; inst.node_count()];
        for (e, &x) in self.twice.iter().enumerate() {
            let edge = inst.edge(e);
            load[edge.u] += u32::from(x);
            load[edge.v] += u32::from(x);
        }
        load.iter().all(|&l| l <= 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpKind {
    Tight,
    PointedNotTight,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LPClassification {
    pub kind: LpKind,
    /// Margin of the optimum over every other corner. Zero when degenerate.
    pub epsilon: f64,
    /// False when `epsilon` is only a certified lower bound.
    pub epsilon_exact: bool,
    pub optimum: HalfIntegralSolution,
}

fn check_cap(inst: &Instance, cap: usize) -> Result<()> {
    if inst.node_count() > cap {
        return Err(Error::SizeCap { n: inst.node_count(), cap });
    }
    Ok(())
}

/// Depth-first corner enumeration. The lowest free node is either left
/// exposed, matched to a higher free neighbor, or placed as the minimum node
/// of an odd cycle through free nodes.
struct Walker<'a, F: FnMut(&[u8])> {
    inst: &'a Instance,
    used: Vec<bool>,
    twice: Vec<u8>,
    visit: F,
}

impl<F: FnMut(&[u8])> Walker<'_, F> {
    fn go(&mut self, from: usize) {
        let n = self.inst.node_count();
        let Some(v) = (from..n).find(|&i| !self.used[i]) else {
            (self.visit)(&self.twice);
            return;
        };
        self.used[v] = true;
        self.go(v + 1);
        for &a in self.inst.out_arcs(v) {
            let arc = *self.inst.arc(a);
            if !self.used[arc.to] {
                self.used[arc.to] = true;
                self.twice[arc.edge] = 2;
                self.go(v + 1);
                self.twice[arc.edge] = 0;
                self.used[arc.to] = false;
            }
        }
        let mut path = vec![v];
        let mut edges = Vec::new();
        self.cycles(v, &mut path, &mut edges);
        self.used[v] = false;
    }

    /// Extends a simple path from `start` through free nodes with ids above
    /// `start`; closes odd cycles back to `start`. Each cycle is produced once
    /// by requiring the second node to be smaller than the last.
    fn cycles(&mut self, start: usize, path: &mut Vec<usize>, edges: &mut Vec<usize>) {
        let tail = *path.last().expect("non-empty");
        for &a in self.inst.out_arcs(tail) {
            let arc = *self.inst.arc(a);
            let next = arc.to;
            if next == start && path.len() >= 3 && path.len() % 2 == 1 && path[1] < tail {
                edges.push(arc.edge);
                for &e in edges.iter() {
                    self.twice[e] = 1;
                }
                self.go(start + 1);
                for &e in edges.iter() {
                    self.twice[e] = 0;
                }
                edges.pop();
            } else if next > start && !self.used[next] {
                self.used[next] = true;
                path.push(next);
                edges.push(arc.edge);
                self.cycles(start, path, edges);
                edges.pop();
                path.pop();
                self.used[next] = false;
            }
        }
    }
}

fn walk_corners(inst: &Instance, visit: impl FnMut(&[u8])) {
    let mut walker = Walker {
        inst,
        used: vec![false; inst.node_count()],
        twice: vec![0; inst.edge_count()],
        visit,
    };
    walker.go(0);
}

/// All half-integral corners, in a deterministic order.
pub fn enumerate_corners(inst: &Instance) -> Result<Vec<HalfIntegralSolution>> {
    enumerate_corners_capped(inst, DEFAULT_CAP)
}

pub fn enumerate_corners_capped(inst: &Instance, cap: usize) -> Result<Vec<HalfIntegralSolution>> {
    check_cap(inst, cap)?;
    let mut out = Vec::new();
    walk_corners(inst, |t| out.push(HalfIntegralSolution::from_twice(inst, t.to_vec())));
    Ok(out)
}

/// Classifies the LP by comparing the two best corners.
pub fn classify(inst: &Instance) -> Result<LPClassification> {
    classify_capped(inst, DEFAULT_CAP)
}

pub fn classify_capped(inst: &Instance, cap: usize) -> Result<LPClassification> {
    check_cap(inst, cap)?;
    let mut best: Option<(f64, Vec<u8>)> = None;
    let mut second = f64::NEG_INFINITY;
    walk_corners(inst, |t| {
        let w: f64 = t.iter().zip(inst.edges()).map(|(&x, e)| f64::from(x) * 0.5 * e.w).sum();
        match &best {
            Some((b, _)) if w <= *b => second = second.max(w),
            Some((b, _)) => {
                second = second.max(*b);
                best = Some((w, t.to_vec()));
            }
            None => best = Some((w, t.to_vec())),
        }
    });
    let (top, twice) = best.expect("the empty matching is always a corner");
    let optimum = HalfIntegralSolution::from_twice(inst, twice);
    let gap = top - second;
    let (kind, epsilon) = if gap <= LP_TOL {
        (LpKind::Degenerate, 0.0)
    } else if optimum.is_integral() {
        (LpKind::Tight, gap)
    } else {
        (LpKind::PointedNotTight, gap)
    };
    Ok(LPClassification { kind, epsilon, epsilon_exact: true, optimum })
}

/// Certifies tightness without enumeration from a dual-feasible `gamma`
/// whose objective equals `w(M)` and which leaves every edge outside `M`
/// strictly slack. Under those conditions `M` is the unique LP optimum and
/// every other corner loses at least
/// `min(½·min non-M slack, min_{e∈M} w_e)`, which is reported as a lower
/// bound on ε.
pub fn certify_tight(inst: &Instance, matching: &[usize], gamma: &[f64], tol: f64) -> Option<LPClassification> {
    let report = dual_check(gamma, inst, tol);
    if !report.feasible || !is_matching(inst, matching) {
        return None;
    }
    let primal: f64 = matching.iter().map(|&e| inst.edge(e).w).sum();
    if (report.objective - primal).abs() > tol {
        return None;
    }
    let mut in_m = vec![false; inst.edge_count()];
    for &e in matching {
        in_m[e] = true;
    }
    let mut min_slack = f64::INFINITY;
    for (e, edge) in inst.edges().iter().enumerate() {
        if !in_m[e] {
            min_slack = min_slack.min(gamma[edge.u] + gamma[edge.v] - edge.w);
        }
    }
    if min_slack <= tol {
        return None;
    }
    let min_w = matching.iter().map(|&e| inst.edge(e).w).fold(f64::INFINITY, f64::min);
    Some(LPClassification {
        kind: LpKind::Tight,
        epsilon: (0.5 * min_slack).min(min_w),
        epsilon_exact: false,
        optimum: HalfIntegralSolution::from_matching(inst, matching),
    })
}

/// True if the edges are pairwise vertex-disjoint.
pub fn is_matching(inst: &Instance, edges: &[usize]) -> bool {
    let mut seen = vec![false; inst.node_count()];
    for &e in edges {
        let edge = inst.edge(e);
        if seen[edge.u] || seen[edge.v] {
            return false;
        }
        seen[edge.u] = true;
        seen[edge.v] = true;
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualViolation {
    pub u: usize,
    pub v: usize,
    /// `w - γ_u - γ_v`.
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualReport {
    pub feasible: bool,
    pub violations: Vec<DualViolation>,
    pub negative_nodes: Vec<usize>,
    pub objective: f64,
    /// Set once a primal optimum is known.
    pub optimal: Option<bool>,
}

/// Dual feasibility of `gamma`: `γ ≥ 0` and `γ_u + γ_v ≥ w` on every edge.
pub fn dual_check(gamma: &[f64], inst: &Instance, tol: f64) -> DualReport {
    let negative_nodes: Vec<usize> = (0..gamma.len()).filter(|&i| gamma[i] < -tol).collect();
    let violations: Vec<DualViolation> = inst
        .edges()
        .iter()
        .filter(|e| gamma[e.u] + gamma[e.v] < e.w - tol)
        .map(|e| DualViolation { u: e.u, v: e.v, deficit: e.w - gamma[e.u] - gamma[e.v] })
        .collect();
    DualReport {
        feasible: negative_nodes.is_empty() && violations.is_empty(),
        violations,
        negative_nodes,
        objective: gamma.iter().sum(),
        optimal: None,
    }
}

/// [`dual_check`] plus optimality against a known primal optimum.
pub fn dual_check_against(gamma: &[f64], inst: &Instance, primal: f64, tol: f64) -> DualReport {
    let mut r = dual_check(gamma, inst, tol);
    r.optimal = Some(r.feasible && (r.objective - primal).abs() <= tol);
    r
}

/// Per-edge solid labels of a non-degenerate classification.
pub fn solid_labels(c: &LPClassification) -> Result<Vec<Solid>> {
    if c.kind == LpKind::Degenerate {
        return Err(Error::Degenerate);
    }
    Ok((0..c.optimum.twice.len()).map(|e| c.optimum.label(e)).collect())
}
