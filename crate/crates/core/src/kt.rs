//! Structure decomposition of a Nash bargaining solution.
//!
//! Matched nodes are grouped by slack: a node's earning minus the best
//! offer it receives from outside its pair. Equal-slack nodes linked by
//! matched edges or by edges carrying that second-best offer form a
//! structure (path, blossom, bicycle or alternating cycle). Unmatched nodes
//! form `C_0`.

use serde::Serialize;

use crate::dynamics::{fixed_point_residual, MessageState};
use crate::error::{Error, Result};
use crate::instance::{reverse, Instance};
use crate::nb::NBSolution;

/// Slack clustering tolerance.
pub const TOL_CLUSTER: f64 = 1e-6;

/// How ties between structures are staged.
pub const LEVEL_CONVENTION: &str =
    "structures with equal slack share one level and add no zero difference to the gap";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Path,
    Blossom,
    Bicycle,
    /// Even alternating cycle: the solution has a free parameter.
    Cycle,
    /// Any other shape (a tree with a branch point, more than two cycles).
    Irregular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Structure {
    pub nodes: Vec<usize>,
    /// Matched edges.
    pub e1: Vec<usize>,
    /// Edges carrying a node's second-best offer.
    pub e2: Vec<usize>,
    /// Nodes plus the far endpoints of `e2`.
    pub v_ext: Vec<usize>,
    pub kind: StructureKind,
    pub sigma: f64,
    /// Index into [`KTDecomposition::levels`].
    pub level: usize,
}

impl Structure {
    pub fn contains_edge(&self, e: usize) -> bool {
        self.e1.contains(&e) || self.e2.contains(&e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KTDecomposition {
    pub c0: Vec<usize>,
    /// Ordered by slack, then by smallest node.
    pub structures: Vec<Structure>,
    /// Distinct slack levels, ascending.
    pub levels: Vec<f64>,
    /// Structure index of every node; `None` for `C_0`.
    pub structure_of: Vec<Option<usize>>,
    pub node_slack: Vec<Option<f64>>,
    /// `None` when a cycle structure makes the solution non-unique.
    pub gap: Option<f64>,
    pub convention: &'static str,
}

impl KTDecomposition {
    /// Slack of the structure containing `i`, 0 on `C_0`.
    pub fn sigma_of(&self, i: usize) -> f64 {
        self.structure_of[i].map_or(0.0, |q| self.structures[q].sigma)
    }
}

fn components(n: usize, members: &[usize], links: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in links {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for &m in members {
        let r = find(&mut parent, m);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(m);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort();
    groups
}

/// Shape of a connected structure. Edges leaving the structure become
/// distinct leaves so that two edges to one outside node do not close a
/// cycle.
fn classify_shape(inst: &Instance, nodes: &[usize], edges: &[usize]) -> StructureKind {
    let inside = |v: usize| nodes.binary_search(&v).is_ok();
    let mut local = std::collections::HashMap::new();
    for (k, &v) in nodes.iter().enumerate() {
        local.insert(v, k);
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for &e in edges {
        let edge = inst.edge(e);
        match (inside(edge.u), inside(edge.v)) {
            (true, true) => {
                let (a, b) = (local[&edge.u], local[&edge.v]);
                adj[a].push(b);
                adj[b].push(a);
            }
            (true, false) | (false, true) => {
                let a = local[&if inside(edge.u) { edge.u } else { edge.v }];
                let leaf = adj.len();
                adj.push(vec![a]);
                adj[a].push(leaf);
            }
            (false, false) => {}
        }
    }
    let v = adj.len();
    let e: usize = adj.iter().map(Vec::len).sum::<usize>() / 2;
    let cyclomatic = (e + 1).saturating_sub(v);
    match cyclomatic {
        0 if adj.iter().all(|l| l.len() <= 2) => StructureKind::Path,
        0 => StructureKind::Irregular,
        1 => {
            // Peel leaves; what remains is the cycle.
            let mut deg: Vec<usize> = adj.iter().map(Vec::len).collect();
            let mut stack: Vec<usize> = (0..v).filter(|&x| deg[x] == 1).collect();
            let mut gone = vec![false; v];
            while let Some(x) = stack.pop() {
                gone[x] = true;
                for &y in &adj[x] {
                    if !gone[y] {
                        deg[y] -= 1;
                        if deg[y] == 1 {
                            stack.push(y);
                        }
                    }
                }
            }
            let len = gone.iter().filter(|g| !**g).count();
            if len % 2 == 1 {
                StructureKind::Blossom
            } else {
                StructureKind::Cycle
            }
        }
        2 => StructureKind::Bicycle,
        _ => StructureKind::Irregular,
    }
}

/// Recovers the decomposition from an exact fixed point and its certified
/// NB solution.
pub fn decompose(fp: &MessageState, sol: &NBSolution, inst: &Instance) -> Result<KTDecomposition> {
    decompose_with(fp, sol, inst, TOL_CLUSTER)
}

pub fn decompose_with(fp: &MessageState, sol: &NBSolution, inst: &Instance, tol: f64) -> Result<KTDecomposition> {
    if !sol.certified() {
        return Err(Error::Uncertified("decomposition needs a stable, balanced solution".into()));
    }
    let residual = fixed_point_residual(&fp.alpha, inst)?;
    if residual > tol {
        return Err(Error::NotFixedPoint { residual, tol });
    }
    let n = inst.node_count();
    if fp.earnings.iter().zip(&sol.gamma).any(|(a, b)| (a - b).abs() > tol) {
        return Err(Error::Uncertified("fixed point earnings differ from the solution".into()));
    }
    let partner = sol.partners(inst);
    let c0: Vec<usize> = (0..n).filter(|&i| partner[i].is_none()).collect();

    let mut slack = vec![None; n];
    let mut e2_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let Some(p) = partner[i] else { continue };
        let incoming: Vec<(f64, usize)> = inst
            .out_arcs(i)
            .iter()
            .filter(|&&a| inst.arc(a).to != p)
            .map(|&a| (fp.offers[reverse(a)], inst.arc(a).edge))
            .collect();
        let psi = incoming.iter().map(|x| x.0).fold(0.0, f64::max);
        slack[i] = Some(sol.gamma[i] - psi);
        if psi > tol {
            e2_of[i] = incoming.iter().filter(|x| (x.0 - psi).abs() <= tol).map(|x| x.1).collect();
        }
    }

    // Cluster slacks into levels.
    let mut values: Vec<f64> = slack.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    let mut levels: Vec<Vec<f64>> = Vec::new();
    for &s in &values {
        match levels.last_mut() {
            Some(group) if s - group.last().expect("non-empty") <= tol => group.push(s),
            Some(group) => {
                let prev = *group.last().expect("non-empty");
                if s - prev <= 10.0 * tol {
                    return Err(Error::UnstableClustering(prev, s));
                }
                levels.push(vec![s]);
            }
            None => levels.push(vec![s]),
        }
    }
    let level_values: Vec<f64> = levels.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let level_index = |s: f64| {
        levels
            .iter()
            .position(|g| g.first().expect("non-empty") - tol <= s && s <= g.last().expect("non-empty") + tol)
            .expect("every slack was clustered")
    };
    let node_level: Vec<Option<usize>> = slack.iter().map(|s| s.map(level_index)).collect();

    // Components inside each level.
    let mut structures = Vec::new();
    for (lv, &sigma) in level_values.iter().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| node_level[i] == Some(lv)).collect();
        let mut links = Vec::new();
        for &i in &members {
            let p = partner[i].expect("leveled nodes are matched");
            links.push((i, p));
            for &e in &e2_of[i] {
                let k = inst.edge(e).other(i);
                if node_level[k] == Some(lv) {
                    links.push((i, k));
                }
            }
        }
        for nodes in components(n, &members, &links) {
            let mut e1 = Vec::new();
            let mut e2 = Vec::new();
            for &i in &nodes {
                let p = partner[i].expect("matched");
                e1.push(inst.edge_between(i, p).expect("matched edge exists"));
                e2.extend(e2_of[i].iter().copied());
            }
            e1.sort_unstable();
            e1.dedup();
            e2.sort_unstable();
            e2.dedup();
            let mut v_ext = nodes.clone();
            for &e in &e2 {
                v_ext.push(inst.edge(e).u);
                v_ext.push(inst.edge(e).v);
            }
            v_ext.sort_unstable();
            v_ext.dedup();
            let all: Vec<usize> = e1.iter().chain(&e2).copied().collect();
            let kind = classify_shape(inst, &nodes, &all);
            structures.push(Structure { nodes, e1, e2, v_ext, kind, sigma, level: lv });
        }
    }
    structures.sort_by(|a, b| a.level.cmp(&b.level).then(a.nodes[0].cmp(&b.nodes[0])));
    let mut structure_of = vec![None; n];
    for (q, s) in structures.iter().enumerate() {
        for &i in &s.nodes {
            structure_of[i] = Some(q);
        }
    }
    let mut decomp = KTDecomposition {
        c0,
        structures,
        levels: level_values,
        structure_of,
        node_slack: slack,
        gap: None,
        convention: LEVEL_CONVENTION,
    };
    decomp.gap = compute_gap(&decomp, sol, inst).ok();
    Ok(decomp)
}

/// One candidate value in the gap minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapTerm {
    pub source: String,
    pub value: f64,
}

/// All terms whose minimum is the gap.
pub fn gap_terms(decomp: &KTDecomposition, sol: &NBSolution, inst: &Instance) -> Result<Vec<GapTerm>> {
    if let Some(q) = decomp.structures.iter().position(|s| s.kind == StructureKind::Cycle) {
        return Err(Error::NonUniqueCycle(q));
    }
    let mut terms = Vec::new();
    if let Some(&first) = decomp.levels.first() {
        terms.push(GapTerm { source: "sigma_1".into(), value: first });
    }
    for (k, w) in decomp.levels.windows(2).enumerate() {
        terms.push(GapTerm { source: format!("level {} - level {}", k + 2, k + 1), value: w[1] - w[0] });
    }
    let g = &sol.gamma;
    for (q, s) in decomp.structures.iter().enumerate() {
        for (e, edge) in inst.edges().iter().enumerate() {
            if s.contains_edge(e) {
                continue;
            }
            if s.v_ext.binary_search(&edge.u).is_ok() && s.v_ext.binary_search(&edge.v).is_ok() {
                terms.push(GapTerm {
                    source: format!("structure {} edge ({}, {})", q + 1, edge.u, edge.v),
                    value: g[edge.u] + g[edge.v] - edge.w - s.sigma,
                });
            }
        }
    }
    Ok(terms)
}

/// The gap: the smallest of σ_1, the differences between consecutive
/// distinct levels, and the excess slack of edges spanning a structure's
/// extended node set without belonging to it.
pub fn compute_gap(decomp: &KTDecomposition, sol: &NBSolution, inst: &Instance) -> Result<f64> {
    let terms = gap_terms(decomp, sol, inst)?;
    terms
        .iter()
        .map(|t| t.value)
        .reduce(f64::min)
        .ok_or_else(|| Error::InvalidInstance("no matched nodes".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRole {
    E1,
    E2,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRow {
    pub u: usize,
    pub v: usize,
    pub role: EdgeRole,
    /// `α_uv + α_vu - w`.
    pub alpha_sum: f64,
    /// `γ_u + γ_v - w`.
    pub gamma_sum: f64,
    /// Required value (E1, E2) or lower bound (cross edges) of `alpha_sum`.
    pub expected: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
    pub passed: bool,
    pub tol: f64,
}

impl IdentityReport {
    pub fn failures(&self) -> impl Iterator<Item = &IdentityRow> {
        self.rows.iter().filter(|r| !r.passed)
    }
}

/// Checks, per edge, the message sum `α_uv + α_vu - w` against the slack of
/// the structure: `-2σ` on matched edges, `+σ` on second-best edges, and at
/// least the larger endpoint slack elsewhere. Earning sums are checked too:
/// 0 on matched edges, `σ` on second-best edges.
pub fn check_fp_identities(decomp: &KTDecomposition, fp: &MessageState, inst: &Instance, tol: f64) -> IdentityReport {
    let mut role = vec![(EdgeRole::Cross, 0.0); inst.edge_count()];
    for s in &decomp.structures {
        for &e in &s.e2 {
            role[e] = (EdgeRole::E2, s.sigma);
        }
        for &e in &s.e1 {
            role[e] = (EdgeRole::E1, s.sigma);
        }
    }
    let g = &fp.earnings;
    let rows: Vec<IdentityRow> = inst
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let alpha_sum = fp.alpha[2 * e] + fp.alpha[2 * e + 1] - edge.w;
            let gamma_sum = g[edge.u] + g[edge.v] - edge.w;
            let (r, sigma) = role[e];
            let (expected, passed) = match r {
                EdgeRole::E1 => (-2.0 * sigma, (alpha_sum + 2.0 * sigma).abs() <= tol && gamma_sum.abs() <= tol),
                EdgeRole::E2 => (sigma, (alpha_sum - sigma).abs() <= tol && (gamma_sum - sigma).abs() <= tol),
                EdgeRole::Cross => {
                    let bound = decomp.sigma_of(edge.u).max(decomp.sigma_of(edge.v));
                    (bound, alpha_sum >= bound - tol)
                }
            };
            IdentityRow { u: edge.u, v: edge.v, role: r, alpha_sum, gamma_sum, expected, passed }
        })
        .collect();
    IdentityReport { passed: rows.iter().all(|r| r.passed), rows, tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nb::{fp_from_nb, nb_oracle, TOL_FP};

    fn setup(inst: &Instance, matching: Vec<usize>, gamma: Vec<f64>) -> (MessageState, NBSolution) {
        let mut sol = NBSolution::new(matching, gamma);
        sol.certify(inst, TOL_FP);
        assert!(sol.certified(), "{sol:?}");
        (fp_from_nb(&sol, inst).unwrap(), sol)
    }

    fn e2() -> Instance {
        Instance::new(3, [(0, 1, 2.0), (1, 2, 1.0)]).unwrap()
    }

    fn e4() -> Instance {
        Instance::new(4, [(0, 1, 2.0), (1, 2, 1.5), (2, 3, 0.8)]).unwrap()
    }

    #[test]
    fn e2_decomposition() {
        let inst = e2();
        let (fp, sol) = setup(&inst, vec![0], vec![0.5, 1.5, 0.0]);
        let d = decompose(&fp, &sol, &inst).unwrap();
        assert_eq!(d.c0, vec![2]);
        assert_eq!(d.structures.len(), 1);
        let s = &d.structures[0];
        assert_eq!((s.nodes.clone(), s.e1.clone(), s.e2.clone()), (vec![0, 1], vec![0], vec![1]));
        assert_eq!(s.v_ext, vec![0, 1, 2]);
        assert_eq!(s.kind, StructureKind::Path);
        assert!((s.sigma - 0.5).abs() < 1e-12);
        assert!((d.gap.unwrap() - 0.5).abs() < 1e-12);
        let ids = check_fp_identities(&d, &fp, &inst, 1e-9);
        assert!(ids.passed);
        assert!((ids.rows[0].alpha_sum + 1.0).abs() < 1e-12);
        assert!((ids.rows[1].alpha_sum - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_edge_decomposition() {
        let inst = Instance::new(2, [(0, 1, 1.0)]).unwrap();
        let (fp, sol) = setup(&inst, vec![0], vec![0.5, 0.5]);
        let d = decompose(&fp, &sol, &inst).unwrap();
        assert!(d.c0.is_empty());
        assert_eq!(d.structures[0].e1, vec![0]);
        assert!(d.structures[0].e2.is_empty());
        assert!((d.structures[0].sigma - 0.5).abs() < 1e-12);
        let ids = check_fp_identities(&d, &fp, &inst, 1e-9);
        assert!(ids.passed);
        assert!((ids.rows[0].alpha_sum + 1.0).abs() < 1e-12);
    }

    #[test]
    fn e4_two_levels() {
        let inst = e4();
        let oracle = nb_oracle(&inst).unwrap();
        assert_eq!(oracle.solutions.len(), 1);
        let want = [0.45, 1.55, 0.4, 0.4];
        assert!(oracle.solutions[0].gamma.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-9));
        let (fp, sol) = setup(&inst, vec![0, 2], want.to_vec());
        let d = decompose(&fp, &sol, &inst).unwrap();
        assert_eq!(d.levels.len(), 2);
        assert!((d.levels[0] - 0.4).abs() < 1e-12 && (d.levels[1] - 0.45).abs() < 1e-12);
        assert_eq!(d.structures[0].e1, vec![2]);
        assert!(d.structures[0].e2.is_empty());
        assert_eq!((d.structures[1].e1.clone(), d.structures[1].e2.clone()), (vec![0], vec![1]));
        assert!((d.gap.unwrap() - 0.05).abs() < 1e-12);
        assert!(check_fp_identities(&d, &fp, &inst, 1e-9).passed);
    }

    #[test]
    fn equal_levels_share_a_stage() {
        let inst = Instance::new(4, [(0, 1, 3.0), (1, 2, 1.0), (2, 3, 3.0), (0, 3, 1.0)]).unwrap();
        let (fp, sol) = setup(&inst, vec![0, 2], vec![1.5; 4]);
        let d = decompose(&fp, &sol, &inst).unwrap();
        assert_eq!(d.structures.len(), 2);
        assert_eq!(d.levels.len(), 1);
        assert!((d.gap.unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn even_cycle_refuses_gap() {
        let inst = Instance::new(4, [(0, 1, 10.0), (1, 2, 9.0), (2, 3, 10.0), (0, 3, 9.0)]).unwrap();
        let (fp, sol) = setup(&inst, vec![0, 2], vec![5.0; 4]);
        let d = decompose(&fp, &sol, &inst).unwrap();
        assert_eq!(d.structures.len(), 1);
        assert_eq!(d.structures[0].kind, StructureKind::Cycle);
        assert_eq!(d.gap, None);
        assert_eq!(compute_gap(&d, &sol, &inst), Err(Error::NonUniqueCycle(0)));
    }

    #[test]
    fn ambiguous_slacks_are_reported() {
        let inst = Instance::new(4, [(0, 1, 1.0), (2, 3, 1.0 + 6e-6)]).unwrap();
        let g = vec![0.5, 0.5, 0.5 + 3e-6, 0.5 + 3e-6];
        let (fp, sol) = setup(&inst, vec![0, 1], g);
        assert!(matches!(decompose(&fp, &sol, &inst), Err(Error::UnstableClustering(..))));
    }

    #[test]
    fn uncertified_rejected() {
        let inst = e2();
        let sol = NBSolution::new(vec![0], vec![0.5, 1.5, 0.0]);
        let fp = crate::nb::fp_from_gamma(&sol.gamma, &inst);
        assert!(matches!(decompose(&fp, &sol, &inst), Err(Error::Uncertified(_))));
    }
}
