//! Comparison processes on a path `0 - 1 - ... - ℓ`.
//!
//! The simplified dynamics replaces the clamped offers by their linear
//! branches (half surplus on matched edges, `w - α` elsewhere) and feeds the
//! two end messages from external boundary sequences. Bounding processes
//! are simplified runs started at a checkerboard offset from a fixed point;
//! they sandwich the real dynamics on a path structure. The mass process is
//! a non-negative envelope for the difference of two simplified runs.
//!
//! Messages are stored per path edge `i = (i, i+1)`: `fwd[i] = α̂_{i→i+1}`
//! and `bwd[i] = α̂_{i+1→i}`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{sup_distance, Engine, MessageState};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::kt::{KTDecomposition, StructureKind};

/// Path weights plus an alternating matching.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathGraph {
    pub weights: Vec<f64>,
    pub matched: Vec<bool>,
}

impl PathGraph {
    pub fn new(weights: Vec<f64>, matched: Vec<bool>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig("path needs at least one edge".into()));
        }
        if weights.len() != matched.len() {
            return Err(Error::InvalidConfig("one matching flag per path edge".into()));
        }
        if matched.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("path matching must alternate".into()));
        }
        Ok(Self { weights, matched })
    }

    /// Alternating matching starting with a matched first edge when
    /// `first_matched`.
    pub fn alternating(weights: Vec<f64>, first_matched: bool) -> Self {
        let matched = (0..weights.len()).map(|i| (i % 2 == 0) == first_matched).collect();
        Self { weights, matched }
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Boundary input sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Boundary {
    Constant(f64),
    /// Value at each time; the last value is held afterwards.
    Schedule(Vec<f64>),
}

impl Boundary {
    pub fn at(&self, t: u64) -> f64 {
        match self {
            Boundary::Constant(b) => *b,
            Boundary::Schedule(v) => v[(t as usize).min(v.len() - 1)],
        }
    }
}

/// Message pair on a path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMessages {
    pub fwd: Vec<f64>,
    pub bwd: Vec<f64>,
}

impl PathMessages {
    pub fn zeros(len: usize) -> Self {
        Self { fwd: vec![0.0; len], bwd: vec![0.0; len] }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        let f = sup_distance(&self.fwd, &other.fwd).expect("same path");
        let b = sup_distance(&self.bwd, &other.bwd).expect("same path");
        f.max(b)
    }

    fn flat(&self) -> Vec<f64> {
        self.fwd.iter().chain(&self.bwd).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplifiedPathState {
    pub path: PathGraph,
    pub alpha: PathMessages,
    pub left: Boundary,
    pub right: Boundary,
    pub kappa: f64,
    pub time: u64,
}

/// Simplified offers `(m̂_{i→i+1}, m̂_{i+1→i})` per edge. Never clamped.
pub fn simplified_offers(path: &PathGraph, alpha: &PathMessages) -> PathMessages {
    let mut out = PathMessages::zeros(path.len());
    for i in 0..path.len() {
        let (w, f, b) = (path.weights[i], alpha.fwd[i], alpha.bwd[i]);
        if path.matched[i] {
            out.fwd[i] = 0.5 * (w - f + b);
            out.bwd[i] = 0.5 * (w - b + f);
        } else {
            out.fwd[i] = w - f;
            out.bwd[i] = w - b;
        }
    }
    out
}

impl SimplifiedPathState {
    pub fn new(path: PathGraph, alpha: PathMessages, left: Boundary, right: Boundary, kappa: f64) -> Result<Self> {
        if alpha.fwd.len() != path.len() || alpha.bwd.len() != path.len() {
            return Err(Error::DomainMismatch { expected: path.len(), got: alpha.fwd.len().min(alpha.bwd.len()) });
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidConfig(format!("kappa {kappa} must lie in (0, 1)")));
        }
        for b in [&left, &right] {
            if matches!(b, Boundary::Schedule(v) if v.is_empty()) {
                return Err(Error::InvalidConfig("empty boundary schedule".into()));
            }
        }
        Ok(Self { path, alpha, left, right, kappa, time: 0 })
    }

    pub fn offers(&self) -> PathMessages {
        simplified_offers(&self.path, &self.alpha)
    }

    /// One synchronous step; returns the sup-norm change.
    pub fn advance(&mut self) -> f64 {
        let next = simplified_step(self);
        let change = next.alpha.sup_distance(&self.alpha);
        *self = next;
        change
    }
}

/// One step of the simplified dynamics.
pub fn simplified_step(state: &SimplifiedPathState) -> SimplifiedPathState {
    let l = state.path.len();
    let k = state.kappa;
    let m = state.offers();
    let a = &state.alpha;
    let mut next = PathMessages::zeros(l);
    next.fwd[0] = k * state.left.at(state.time) + (1.0 - k) * a.fwd[0];
    for i in 1..l {
        next.fwd[i] = k * m.fwd[i - 1] + (1.0 - k) * a.fwd[i];
    }
    next.bwd[l - 1] = k * state.right.at(state.time) + (1.0 - k) * a.bwd[l - 1];
    for i in 0..l - 1 {
        next.bwd[i] = k * m.bwd[i + 1] + (1.0 - k) * a.bwd[i];
    }
    SimplifiedPathState { alpha: next, time: state.time + 1, ..state.clone() }
}

/// Unique fixed point for constant boundaries, by a direct linear solve.
pub fn simplified_fixed_point(path: &PathGraph, b_left: f64, b_right: f64) -> Result<PathMessages> {
    let l = path.len();
    let fwd = |i: usize| i;
    let bwd = |i: usize| l + i;
    let mut a = DMatrix::<f64>::zeros(2 * l, 2 * l);
    let mut rhs = DVector::<f64>::zeros(2 * l);
    a[(fwd(0), fwd(0))] = 1.0;
    rhs[fwd(0)] = b_left;
    a[(bwd(l - 1), bwd(l - 1))] = 1.0;
    rhs[bwd(l - 1)] = b_right;
    // fwd[i] = m̂_{i-1 → i}
    for i in 1..l {
        let (row, src, w) = (fwd(i), i - 1, path.weights[i - 1]);
        a[(row, row)] = 1.0;
        if path.matched[src] {
            a[(row, fwd(src))] += 0.5;
            a[(row, bwd(src))] -= 0.5;
            rhs[row] = 0.5 * w;
        } else {
            a[(row, fwd(src))] += 1.0;
            rhs[row] = w;
        }
    }
    // bwd[i] = m̂_{i+2 → i+1}
    for i in 0..l - 1 {
        let (row, src, w) = (bwd(i), i + 1, path.weights[i + 1]);
        a[(row, row)] = 1.0;
        if path.matched[src] {
            a[(row, bwd(src))] += 0.5;
            a[(row, fwd(src))] -= 0.5;
            rhs[row] = 0.5 * w;
        } else {
            a[(row, bwd(src))] += 1.0;
            rhs[row] = w;
        }
    }
    let x = a.lu().solve(&rhs).ok_or_else(|| Error::Invariant("singular simplified fixed-point system".into()))?;
    Ok(PathMessages { fwd: x.rows(0, l).iter().copied().collect(), bwd: x.rows(l, l).iter().copied().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplifiedRun {
    pub estimate: PathMessages,
    /// Exact fixed point from the linear solve.
    pub fixed_point: PathMessages,
    /// `‖α̂^t - α̂*‖∞` for `t = 0..=steps`.
    pub decay: Vec<f64>,
    pub steps: u64,
    pub converged: bool,
}

/// Iterates until the undamped residual is at most `1e-12` or `horizon`
/// steps pass. Requires constant boundaries.
pub fn run_simplified(state: &SimplifiedPathState, horizon: u64) -> Result<SimplifiedRun> {
    let (Boundary::Constant(bl), Boundary::Constant(br)) = (&state.left, &state.right) else {
        return Err(Error::InvalidConfig("run_simplified needs constant boundaries".into()));
    };
    let fixed_point = simplified_fixed_point(&state.path, *bl, *br)?;
    let mut s = state.clone();
    let mut decay = vec![s.alpha.sup_distance(&fixed_point)];
    let mut converged = false;
    while s.time - state.time < horizon {
        let change = s.advance();
        decay.push(s.alpha.sup_distance(&fixed_point));
        if change <= state.kappa * 1e-12 {
            converged = true;
            break;
        }
    }
    Ok(SimplifiedRun { estimate: s.alpha, fixed_point, decay, steps: s.time - state.time, converged })
}

/// Least-squares slope of `ln(value)` against step index over the entries
/// above `floor`. `None` with fewer than two such entries.
pub fn log_slope(values: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        values.iter().enumerate().filter(|(_, v)| **v > floor).map(|(t, v)| (t as f64, v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Path dominance `alpha ⪰ beta`: on even edges `fwd` is larger and `bwd`
/// smaller, on odd edges the reverse.
pub fn path_order_leq(beta: &PathMessages, alpha: &PathMessages, tol: f64) -> bool {
    (0..alpha.fwd.len()).all(|i| {
        let p = if i % 2 == 0 { 1.0 } else { -1.0 };
        p * (alpha.fwd[i] - beta.fwd[i]) >= -tol && p * (alpha.bwd[i] - beta.bwd[i]) <= tol
    })
}

/// Parameters of an `(s, Δ, δ)` bounding process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundingConfig {
    /// +1 or -1.
    pub s: i8,
    pub delta_big: f64,
    pub delta: f64,
    /// Gap of the instance; `δ ≤ min(σ, Δ)` is required.
    pub sigma: f64,
    /// Reference fixed point restricted to the path.
    pub reference: PathMessages,
    pub kappa: f64,
}

impl BoundingConfig {
    fn sign(&self) -> f64 {
        f64::from(self.s)
    }

    fn validate(&self, path: &PathGraph) -> Result<()> {
        if self.s != 1 && self.s != -1 {
            return Err(Error::InvalidConfig("s must be +1 or -1".into()));
        }
        if !(self.delta_big > 0.0) {
            return Err(Error::Precondition("Δ must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta <= self.sigma.min(self.delta_big) + 1e-15) {
            return Err(Error::Precondition(format!(
                "δ = {} must lie in (0, min(σ = {}, Δ = {})]",
                self.delta, self.sigma, self.delta_big
            )));
        }
        if self.reference.fwd.len() != path.len() || self.reference.bwd.len() != path.len() {
            return Err(Error::DomainMismatch { expected: path.len(), got: self.reference.fwd.len() });
        }
        Ok(())
    }

    /// Checkerboard offset `s(-1)^i·c` applied to forward messages; backward
    /// messages get the opposite sign.
    fn offset(&self, c: f64) -> PathMessages {
        let l = self.reference.fwd.len();
        let mut out = self.reference.clone();
        for i in 0..l {
            let p = self.sign() * if i % 2 == 0 { 1.0 } else { -1.0 };
            out.fwd[i] += p * c;
            out.bwd[i] -= p * c;
        }
        out
    }

    pub fn initial(&self) -> PathMessages {
        self.offset(self.delta_big)
    }

    /// Closed-form fixed point: the reference offset by `Δ - δ`.
    pub fn closed_form_fixed_point(&self) -> PathMessages {
        self.offset(self.delta_big - self.delta)
    }

    pub fn boundaries(&self) -> (f64, f64) {
        let l = self.reference.fwd.len();
        let c = self.delta_big - self.delta;
        let parity = if l % 2 == 0 { 1.0 } else { -1.0 };
        (self.reference.fwd[0] + self.sign() * c, self.reference.bwd[l - 1] + self.sign() * parity * c)
    }

    pub fn start(&self, path: &PathGraph) -> Result<SimplifiedPathState> {
        self.validate(path)?;
        let (bl, br) = self.boundaries();
        SimplifiedPathState::new(path.clone(), self.initial(), Boundary::Constant(bl), Boundary::Constant(br), self.kappa)
    }
}

/// Matched edges must have non-positive message surplus, unmatched edges
/// non-negative. Returns the first offending edge.
pub fn matching_sign_violation(path: &PathGraph, a: &PathMessages, tol: f64) -> Option<usize> {
    (0..path.len()).find(|&i| {
        let s = a.fwd[i] + a.bwd[i] - path.weights[i];
        if path.matched[i] {
            s > tol
        } else {
            s < -tol
        }
    })
}

/// Runs a bounding process for `horizon` steps, asserting the matching sign
/// conditions at every step. Returns `A^0, ..., A^horizon`.
pub fn bounding_process(config: &BoundingConfig, path: &PathGraph, horizon: u64) -> Result<Vec<PathMessages>> {
    let mut state = config.start(path)?;
    let mut out = Vec::with_capacity(horizon as usize + 1);
    for t in 0..=horizon {
        if t > 0 {
            state.advance();
        }
        if let Some(i) = matching_sign_violation(path, &state.alpha, 1e-12) {
            return Err(Error::Invariant(format!("bounding process sign condition fails on edge {i} at t={t}")));
        }
        out.push(state.alpha.clone());
    }
    Ok(out)
}

/// A path structure laid out as a path: node order and the arc id of each
/// forward and backward message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructurePath {
    pub nodes: Vec<usize>,
    pub graph: PathGraph,
    pub fwd_arcs: Vec<usize>,
    pub bwd_arcs: Vec<usize>,
}

impl StructurePath {
    pub fn restrict(&self, alpha: &[f64]) -> PathMessages {
        PathMessages {
            fwd: self.fwd_arcs.iter().map(|&a| alpha[a]).collect(),
            bwd: self.bwd_arcs.iter().map(|&a| alpha[a]).collect(),
        }
    }
}

/// Lays out structure `q` (0-based) on its extended node set, oriented from
/// the endpoint with the smaller id.
pub fn structure_path(inst: &Instance, decomp: &KTDecomposition, q: usize) -> Result<StructurePath> {
    let s = decomp.structures.get(q).ok_or_else(|| Error::InvalidConfig(format!("no structure {q}")))?;
    if s.kind != StructureKind::Path {
        return Err(Error::NotAPath(q));
    }
    let edges: Vec<usize> = s.e1.iter().chain(&s.e2).copied().collect();
    let mut adj: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for &e in &edges {
        let edge = inst.edge(e);
        adj.entry(edge.u).or_default().push(e);
        adj.entry(edge.v).or_default().push(e);
    }
    if adj.len() != edges.len() + 1 || adj.values().any(|l| l.len() > 2) {
        return Err(Error::NotAPath(q));
    }
    let start = *adj.iter().find(|(_, l)| l.len() == 1).ok_or(Error::NotAPath(q))?.0;
    let mut nodes = vec![start];
    let mut used = Vec::new();
    let mut cur = start;
    while let Some(&e) = adj[&cur].iter().find(|e| !used.contains(*e)) {
        used.push(e);
        cur = inst.edge(e).other(cur);
        nodes.push(cur);
    }
    if used.len() != edges.len() {
        return Err(Error::NotAPath(q));
    }
    let weights = used.iter().map(|&e| inst.edge(e).w).collect();
    let matched = used.iter().map(|e| s.e1.contains(e)).collect();
    let graph = PathGraph::new(weights, matched).map_err(|_| Error::NotAPath(q))?;
    let arc = |a: usize, b: usize| inst.arc_between(a, b).expect("path edge exists");
    let fwd_arcs = nodes.windows(2).map(|w| arc(w[0], w[1])).collect();
    let bwd_arcs = nodes.windows(2).map(|w| arc(w[1], w[0])).collect();
    Ok(StructurePath { nodes, graph, fwd_arcs, bwd_arcs })
}

/// How the real dynamics is initialized in [`sandwich_test`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SandwichInit {
    /// Start at the fixed point itself.
    Reference,
    /// Checkerboard offset of sign `s` on the path at the full allowed
    /// deviation; other arcs get a seeded random offset.
    Checkerboard { s: i8, seed: u64 },
    /// Seeded random offsets everywhere within the allowed deviation.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub holds: bool,
    pub steps: u64,
    pub first_violation: Option<u64>,
    /// `U_G` and `U_{G,G_q}` of the initial vector.
    pub initial_u_g: f64,
    pub initial_u_gq: f64,
    pub path_nodes: Vec<usize>,
}

/// Runs the real dynamics from a perturbation of the fixed point `fp`
/// alongside the `(+)` and `(-)` bounding processes on path structure `q`
/// (0-based), checking `A(-) ⪯ α_P ⪯ A(+)` at every step.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_test(
    inst: &Instance,
    decomp: &KTDecomposition,
    fp: &MessageState,
    q: usize,
    delta_big: f64,
    delta: f64,
    horizon: u64,
    kappa: f64,
    init: SandwichInit,
) -> Result<SandwichReport> {
    let w_max = inst.max_weight();
    if delta_big > w_max {
        return Err(Error::Precondition(format!("Δ = {delta_big} exceeds W = {w_max}")));
    }
    let sigma = decomp.gap.ok_or_else(|| Error::Precondition("instance has no gap".into()))?;
    let sp = structure_path(inst, decomp, q)?;
    let reference = sp.restrict(&fp.alpha);
    let cfg = |s: i8| BoundingConfig { s, delta_big, delta, sigma, reference: reference.clone(), kappa };

    // Arcs leaving C_0 or an earlier structure may deviate by Δ - δ only.
    let earlier: Vec<bool> = (0..inst.node_count()).map(|i| decomp.structure_of[i].is_none_or(|r| r < q)).collect();
    let bound = |a: usize| if earlier[inst.arc(a).from] { delta_big - delta } else { delta_big };

    let mut rng = ChaCha8Rng::seed_from_u64(match init {
        SandwichInit::Checkerboard { seed, .. } | SandwichInit::Random { seed } => seed,
        SandwichInit::Reference => 0,
    });
    let mut alpha0: Vec<f64> = fp
        .alpha
        .iter()
        .enumerate()
        .map(|(a, &x)| match init {
            SandwichInit::Reference => x,
            _ => x + rng.random_range(-1.0..=1.0) * bound(a),
        })
        .collect();
    if let SandwichInit::Checkerboard { s, .. } = init {
        for i in 0..sp.graph.len() {
            let p = f64::from(s) * if i % 2 == 0 { 1.0 } else { -1.0 };
            let (f, b) = (sp.fwd_arcs[i], sp.bwd_arcs[i]);
            alpha0[f] = fp.alpha[f] + p * bound(f);
            alpha0[b] = fp.alpha[b] - p * bound(b);
        }
    }
    for x in &mut alpha0 {
        *x = x.clamp(0.0, w_max);
    }
    let initial_u_g = sup_distance(&alpha0, &fp.alpha)?;
    let initial_u_gq = (0..alpha0.len())
        .filter(|&a| earlier[inst.arc(a).from])
        .map(|a| (alpha0[a] - fp.alpha[a]).abs())
        .fold(0.0, f64::max);
    if initial_u_g > delta_big + 1e-12 || initial_u_gq > delta_big - delta + 1e-12 {
        return Err(Error::Precondition("initial vector violates the deviation condition".into()));
    }

    let mut upper = cfg(1).start(&sp.graph)?;
    let mut lower = cfg(-1).start(&sp.graph)?;
    let mut engine = Engine::new(inst, alpha0, kappa)?;
    const TOL: f64 = 1e-12;
    let mut first_violation = None;
    for t in 0..=horizon {
        if t > 0 {
            engine.advance();
            upper.advance();
            lower.advance();
        }
        for side in [&upper, &lower] {
            if matching_sign_violation(&sp.graph, &side.alpha, TOL).is_some() {
                return Err(Error::Invariant(format!("bounding process sign condition fails at t={t}")));
            }
        }
        let real = sp.restrict(engine.alpha());
        if !(path_order_leq(&lower.alpha, &real, TOL) && path_order_leq(&real, &upper.alpha, TOL)) {
            first_violation = Some(t);
            break;
        }
    }
    Ok(SandwichReport {
        holds: first_violation.is_none(),
        steps: horizon,
        first_violation,
        initial_u_g,
        initial_u_gq,
        path_nodes: sp.nodes,
    })
}

/// Which boundary messages receive unit injection in the mass process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    None,
    Left,
    Right,
    Both,
}

impl Injection {
    fn left(self) -> f64 {
        if matches!(self, Injection::Left | Injection::Both) {
            1.0
        } else {
            0.0
        }
    }

    fn right(self) -> f64 {
        if matches!(self, Injection::Right | Injection::Both) {
            1.0
        } else {
            0.0
        }
    }
}

/// Mass on each directed path edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassState {
    pub rho: PathMessages,
}

impl MassState {
    pub fn uniform(len: usize, c: f64) -> Self {
        Self { rho: PathMessages { fwd: vec![c; len], bwd: vec![c; len] } }
    }

    pub fn total(&self) -> f64 {
        self.rho.fwd.iter().chain(&self.rho.bwd).sum()
    }
}

/// One step of the mass recursion. A message fed through a matched edge
/// takes the average of that edge's two masses; one fed through an
/// unmatched edge takes its mass directly. End messages keep a `1-κ`
/// fraction and receive `κ` times the injection.
pub fn mass_step(mass: &MassState, path: &PathGraph, kappa: f64, injection: Injection) -> MassState {
    let l = path.len();
    let r = &mass.rho;
    let mut next = PathMessages::zeros(l);
    next.fwd[0] = (1.0 - kappa) * r.fwd[0] + kappa * injection.left();
    for i in 1..l {
        let feed = if path.matched[i - 1] { 0.5 * (r.fwd[i - 1] + r.bwd[i - 1]) } else { r.fwd[i - 1] };
        next.fwd[i] = kappa * feed + (1.0 - kappa) * r.fwd[i];
    }
    next.bwd[l - 1] = (1.0 - kappa) * r.bwd[l - 1] + kappa * injection.right();
    for i in 0..l - 1 {
        let feed = if path.matched[i + 1] { 0.5 * (r.bwd[i + 1] + r.fwd[i + 1]) } else { r.bwd[i + 1] };
        next.bwd[i] = kappa * feed + (1.0 - kappa) * r.bwd[i];
    }
    MassState { rho: next }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub holds: bool,
    pub first_violation: Option<u64>,
    /// Largest `|Δ̂| - ρ` seen (non-positive when dominated).
    pub worst_excess: f64,
}

/// Evolves two simplified runs with the same constant boundary `b` on both
/// ends, from `base` and `base + diff`, next to a mass process started at
/// `‖diff‖∞` with no injection, and checks `ρ ≥ |Δ̂|` at every step.
pub fn domination_test(
    path: &PathGraph,
    kappa: f64,
    b: f64,
    base: &PathMessages,
    diff: &PathMessages,
    horizon: u64,
) -> Result<DominationReport> {
    const TOL: f64 = 1e-12;
    let shifted = PathMessages {
        fwd: base.fwd.iter().zip(&diff.fwd).map(|(x, d)| x + d).collect(),
        bwd: base.bwd.iter().zip(&diff.bwd).map(|(x, d)| x + d).collect(),
    };
    let mut a = SimplifiedPathState::new(path.clone(), shifted, Boundary::Constant(b), Boundary::Constant(b), kappa)?;
    let mut c = SimplifiedPathState::new(path.clone(), base.clone(), Boundary::Constant(b), Boundary::Constant(b), kappa)?;
    let d0 = diff.flat().iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut mass = MassState::uniform(path.len(), d0);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..=horizon {
        if t > 0 {
            a.advance();
            c.advance();
            mass = mass_step(&mass, path, kappa, Injection::None);
        }
        let excess = (0..path.len())
            .flat_map(|i| {
                [
                    (a.alpha.fwd[i] - c.alpha.fwd[i]).abs() - mass.rho.fwd[i],
                    (a.alpha.bwd[i] - c.alpha.bwd[i]).abs() - mass.rho.bwd[i],
                ]
            })
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(excess);
        if excess > TOL {
            return Ok(DominationReport { holds: false, first_violation: Some(t), worst_excess: worst });
        }
    }
    Ok(DominationReport { holds: true, first_violation: None, worst_excess: worst })
}

/// Seeded random path messages with entries in `[lo, hi]`.
pub fn random_messages(len: usize, lo: f64, hi: f64, seed: u64) -> PathMessages {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || rng.random_range(lo..=hi);
    PathMessages { fwd: (0..len).map(|_| draw()).collect(), bwd: (0..len).map(|_| draw()).collect() }
}

/// CSV with columns `t,value`.
pub fn series_csv(values: &[f64]) -> String {
    let mut out = String::from("t,value\n");
    for (t, v) in values.iter().enumerate() {
        out.push_str(&format!("{t},{v:e}\n"));
    }
    out
}
