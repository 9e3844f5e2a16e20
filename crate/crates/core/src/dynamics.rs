//! The damped message-passing dynamics.
//!
//! Messages live on directed edges, indexed by arc id (see
//! [`Instance::arcs`]). Each node sends along every incident edge its best
//! alternative elsewhere; offers are the Nash split given both alternatives,
//! and a node's earning estimate is its best incoming offer.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{reverse, Instance, InstanceDocument};

/// Offer along `i -> j` given the alternatives `a_ij` of the sender and
/// `a_ji` of the receiver: `(w - a_ij)_+ - ½(w - a_ij - a_ji)_+`.
#[inline]
pub fn compute_offer(w: f64, a_ij: f64, a_ji: f64) -> f64 {
    (w - a_ij).max(0.0) - 0.5 * (w - a_ij - a_ji).max(0.0)
}

/// Message vector plus its derived offers and earnings at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub alpha: Vec<f64>,
    pub offers: Vec<f64>,
    pub earnings: Vec<f64>,
    pub time: u64,
}

impl MessageState {
    /// Offer on arc `i -> j`.
    pub fn offer(&self, inst: &Instance, i: usize, j: usize) -> Option<f64> {
        inst.arc_between(i, j).map(|a| self.offers[a])
    }

    pub fn alpha_between(&self, inst: &Instance, i: usize, j: usize) -> Option<f64> {
        inst.arc_between(i, j).map(|a| self.alpha[a])
    }

    /// True if every message lies in `[0, W]`.
    pub fn is_valid(&self, inst: &Instance) -> bool {
        let w = inst.max_weight();
        self.alpha.iter().all(|&a| (0.0..=w).contains(&a))
    }
}

fn fill_offers(inst: &Instance, alpha: &[f64], offers: &mut [f64]) {
    for (e, edge) in inst.edges().iter().enumerate() {
        let (f, b) = (alpha[2 * e], alpha[2 * e + 1]);
        offers[2 * e] = compute_offer(edge.w, f, b);
        offers[2 * e + 1] = compute_offer(edge.w, b, f);
    }
}

fn fill_earnings(inst: &Instance, offers: &[f64], earnings: &mut [f64]) {
    for (i, g) in earnings.iter_mut().enumerate() {
        *g = inst.out_arcs(i).iter().map(|&a| offers[reverse(a)]).fold(0.0, f64::max);
    }
}

/// Offers and earnings for message vector `alpha`.
pub fn derive(alpha: &[f64], inst: &Instance) -> Result<MessageState> {
    derive_at(alpha, inst, 0)
}

pub fn derive_at(alpha: &[f64], inst: &Instance, time: u64) -> Result<MessageState> {
    if alpha.len() != inst.arc_count() {
        return Err(Error::DomainMismatch { expected: inst.arc_count(), got: alpha.len() });
    }
    let mut offers = vec![0.0; alpha.len()];
    fill_offers(inst, alpha, &mut offers);
    let mut earnings = vec![0.0; inst.node_count()];
    fill_earnings(inst, &offers, &mut earnings);
    Ok(MessageState { alpha: alpha.to_vec(), offers, earnings, time })
}

/// `max_{k in ∂i \ j} m_{k->i}` for every outgoing arc `i -> j`, written to
/// `out`. Uses the top two incoming offers per node.
fn best_alternatives(inst: &Instance, offers: &[f64], out: &mut [f64]) {
    for i in 0..inst.node_count() {
        let arcs = inst.out_arcs(i);
        let (mut best, mut second, mut arg) = (0.0f64, 0.0f64, usize::MAX);
        for &a in arcs {
            let m = offers[reverse(a)];
            if m > best {
                second = best;
                best = m;
                arg = a;
            } else if m > second {
                second = m;
            }
        }
        for &a in arcs {
            out[a] = if a == arg { second } else { best };
        }
    }
}

/// One synchronous damped update. Pure: the input is left untouched.
pub fn step(state: &MessageState, inst: &Instance, kappa: f64) -> MessageState {
    let mut target = vec![0.0; state.alpha.len()];
    best_alternatives(inst, &state.offers, &mut target);
    let alpha: Vec<f64> = state
        .alpha
        .iter()
        .zip(&target)
        .map(|(&a, &t)| kappa * t + (1.0 - kappa) * a)
        .collect();
    derive_at(&alpha, inst, state.time + 1).expect("domain preserved by step")
}

/// Sup-norm distance between two message vectors.
pub fn sup_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DomainMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Residual of the undamped map: `‖T(α) - α‖∞`, where `step` moves a κ
/// fraction toward `T(α)`.
pub fn fixed_point_residual(alpha: &[f64], inst: &Instance) -> Result<f64> {
    let state = derive(alpha, inst)?;
    let mut target = vec![0.0; alpha.len()];
    best_alternatives(inst, &state.offers, &mut target);
    sup_distance(&target, alpha)
}

/// In-place engine with preallocated buffers. Produces the same sequence as
/// repeated [`step`].
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    inst: &'a Instance,
    kappa: f64,
    alpha: Vec<f64>,
    offers: Vec<f64>,
    earnings: Vec<f64>,
    target: Vec<f64>,
    time: u64,
}

impl<'a> Engine<'a> {
    pub fn new(inst: &'a Instance, alpha: Vec<f64>, kappa: f64) -> Result<Self> {
        if alpha.len() != inst.arc_count() {
            return Err(Error::DomainMismatch { expected: inst.arc_count(), got: alpha.len() });
        }
        let mut engine = Self {
            inst,
            kappa,
            offers: vec![0.0; alpha.len()],
            target: vec![0.0; alpha.len()],
            earnings: vec![0.0; inst.node_count()],
            alpha,
            time: 0,
        };
        engine.refresh();
        Ok(engine)
    }

    fn refresh(&mut self) {
        fill_offers(self.inst, &self.alpha, &mut self.offers);
        fill_earnings(self.inst, &self.offers, &mut self.earnings);
    }

    /// Advances one step and returns `‖α^{t+1} - α^t‖∞`.
    pub fn advance(&mut self) -> f64 {
        best_alternatives(self.inst, &self.offers, &mut self.target);
        let k = self.kappa;
        let mut change = 0.0f64;
        for (a, &t) in self.alpha.iter_mut().zip(&self.target) {
            let next = k * t + (1.0 - k) * *a;
            change = change.max((next - *a).abs());
            *a = next;
        }
        self.time += 1;
        self.refresh();
        change
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn offers(&self) -> &[f64] {
        &self.offers
    }

    pub fn earnings(&self) -> &[f64] {
        &self.earnings
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn state(&self) -> MessageState {
        MessageState {
            alpha: self.alpha.clone(),
            offers: self.offers.clone(),
            earnings: self.earnings.clone(),
            time: self.time,
        }
    }
}

/// Initial message vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    Zeros,
    /// Independent uniform draws in `[0, W]`.
    UniformRandom { seed: u64 },
    Explicit { alpha: Vec<f64> },
    /// Buyer-extremal vector (requires a bipartite instance).
    Top,
    /// Seller-extremal vector (requires a bipartite instance).
    Bot,
}

impl Init {
    pub fn materialize(&self, inst: &Instance) -> Result<Vec<f64>> {
        use crate::bipartite::{check_bipartite, extremal_init, Side};
        match self {
            Init::Zeros => Ok(vec![0.0; inst.arc_count()]),
            Init::UniformRandom { seed } => Ok(random_alpha(inst, *seed)),
            Init::Explicit { alpha } => {
                if alpha.len() != inst.arc_count() {
                    return Err(Error::DomainMismatch { expected: inst.arc_count(), got: alpha.len() });
                }
                Ok(alpha.clone())
            }
            Init::Top | Init::Bot => {
                let part = check_bipartite(inst)?;
                let side = if *self == Init::Top { Side::Buyer } else { Side::Seller };
                Ok(extremal_init(inst, &part, side))
            }
        }
    }
}

/// Uniform random valid message vector.
pub fn random_alpha(inst: &Instance, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = inst.max_weight();
    (0..inst.arc_count()).map(|_| rng.random::<f64>() * w).collect()
}

/// What to record while running.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceConfig {
    /// Record every `every` steps; 0 disables step records.
    pub every: u64,
    /// Reference fixed point for `U_G`.
    pub reference: Option<Vec<f64>>,
    /// Edge ids of the subgraph `F` for `U_{G,F}` (needs `reference`).
    pub subgraph: Option<Vec<usize>>,
    /// Full α snapshot every `snapshot_every` steps; 0 disables.
    pub snapshot_every: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub kappa: f64,
    pub eps_conv: f64,
    pub max_iters: u64,
    pub init: Init,
    pub trace: TraceConfig,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { kappa: 0.5, eps_conv: 1e-9, max_iters: 1_000_000, init: Init::Zeros, trace: TraceConfig::default() }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::InvalidConfig(format!("kappa {} must lie in (0, 1)", self.kappa)));
        }
        if !(self.eps_conv > 0.0) {
            return Err(Error::InvalidConfig("eps_conv must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    pub step_change: f64,
    pub u_g: Option<f64>,
    pub u_gf: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub snapshots: Vec<(u64, Vec<f64>)>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,step_change,u_g,u_gf\n");
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(out, "{},{:e},{},{}", r.t, r.step_change, opt(r.u_g), opt(r.u_gf));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: MessageState,
    pub iterations: u64,
    pub trace: Trace,
    pub converged: bool,
}

fn restricted_distance(a: &[f64], b: &[f64], edges: &[usize]) -> f64 {
    edges
        .iter()
        .flat_map(|&e| [2 * e, 2 * e + 1])
        .map(|k| (a[k] - b[k]).abs())
        .fold(0.0, f64::max)
}

/// Runs until `‖α^{t+1} - α^t‖∞ ≤ κ·eps_conv` or `max_iters` steps.
pub fn run(inst: &Instance, config: &DynamicsConfig) -> Result<RunOutcome> {
    run_observed(inst, config, |_| true)
}

/// Like [`run`], but calls `observe` after every step; returning `false`
/// stops the run early (reported as not converged unless the tolerance was
/// also met).
pub fn run_observed(
    inst: &Instance,
    config: &DynamicsConfig,
    mut observe: impl FnMut(&Engine) -> bool,
) -> Result<RunOutcome> {
    config.validate()?;
    let tc = &config.trace;
    if let Some(r) = &tc.reference {
        if r.len() != inst.arc_count() {
            return Err(Error::DomainMismatch { expected: inst.arc_count(), got: r.len() });
        }
    }
    let mut engine = Engine::new(inst, config.init.materialize(inst)?, config.kappa)?;
    let mut trace = Trace::default();
    let threshold = config.kappa * config.eps_conv;
    let mut converged = false;
    while engine.time() < config.max_iters {
        let change = engine.advance();
        let t = engine.time();
        if tc.every > 0 && t % tc.every == 0 {
            let u_g = tc.reference.as_ref().map(|r| sup_distance(engine.alpha(), r).expect("checked"));
            let u_gf = match (&tc.reference, &tc.subgraph) {
                (Some(r), Some(f)) => Some(restricted_distance(engine.alpha(), r, f)),
                _ => None,
            };
            trace.records.push(TraceRecord { t, step_change: change, u_g, u_gf });
        }
        if tc.snapshot_every > 0 && t % tc.snapshot_every == 0 {
            trace.snapshots.push((t, engine.alpha().to_vec()));
        }
        if change <= threshold {
            converged = true;
            break;
        }
        if !observe(&engine) {
            break;
        }
    }
    Ok(RunOutcome { state: engine.state(), iterations: engine.time(), trace, converged })
}

/// Result of reading a pairing off the offers.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Pairing {
    /// Mutual pairs `(i, j)` with `i < j`, sorted.
    pub pairs: Vec<(usize, usize)>,
    /// Nodes whose best offer does not beat the runner-up by more than the margin.
    pub ambiguous: Vec<usize>,
    /// Nodes whose incoming offers are all at most the margin.
    pub unpaired: Vec<usize>,
    /// Nodes with a clear favorite that does not pick them back.
    pub unreciprocated: Vec<usize>,
}

/// Reads `P(i)` from the incoming offers at each node.
pub fn extract_pairing(state: &MessageState, inst: &Instance, margin: f64) -> Pairing {
    let n = inst.node_count();
    let mut partner = vec![None; n];
    let mut out = Pairing::default();
    for (i, slot) in partner.iter_mut().enumerate() {
        let mut offers: Vec<(f64, usize)> =
            inst.out_arcs(i).iter().map(|&a| (state.offers[reverse(a)], inst.arc(a).to)).collect();
        offers.sort_by(|a, b| b.0.total_cmp(&a.0));
        match offers.as_slice() {
            [] => out.unpaired.push(i),
            [(best, _), ..] if *best <= margin => out.unpaired.push(i),
            [(best, j), rest @ ..] => {
                let runner = rest.first().map_or(f64::NEG_INFINITY, |r| r.0);
                if best - runner > margin {
                    *slot = Some(*j);
                } else {
                    out.ambiguous.push(i);
                }
            }
        }
    }
    for i in 0..n {
        if let Some(j) = partner[i] {
            if partner[j] == Some(i) {
                if i < j {
                    out.pairs.push((i, j));
                }
            } else {
                out.unreciprocated.push(i);
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct AlphaRecord {
    from: usize,
    to: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    #[serde(flatten)]
    instance: InstanceDocument,
    alpha: Vec<AlphaRecord>,
}

/// Instance document extended with an `alpha` array.
pub fn snapshot_to_json(inst: &Instance, alpha: &[f64]) -> String {
    let snap = Snapshot {
        instance: inst.to_document(),
        alpha: inst
            .arcs()
            .iter()
            .zip(alpha)
            .map(|(arc, &value)| AlphaRecord { from: arc.from, to: arc.to, value })
            .collect(),
    };
    serde_json::to_string_pretty(&snap).expect("snapshot serializes")
}

/// Parses a snapshot back into an instance and message vector.
pub fn snapshot_from_json(text: &str) -> Result<(Instance, Vec<f64>)> {
    let snap: Snapshot = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let inst = snap.instance.into_instance()?;
    let mut alpha = vec![f64::NAN; inst.arc_count()];
    for r in snap.alpha {
        let a = inst
            .arc_between(r.from, r.to)
            .ok_or_else(|| Error::Parse(format!("alpha entry for missing edge {} -> {}", r.from, r.to)))?;
        alpha[a] = r.value;
    }
    if alpha.iter().any(|a| a.is_nan()) {
        return Err(Error::Parse("snapshot is missing alpha entries".into()));
    }
    Ok((inst, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e2() -> Instance {
        Instance::new(3, [(0, 1, 2.0), (1, 2, 1.0)]).unwrap()
    }

    fn t1() -> Instance {
        Instance::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn set(inst: &Instance, pairs: &[(usize, usize, f64)]) -> Vec<f64> {
        let mut a = vec![0.0; inst.arc_count()];
        for &(i, j, v) in pairs {
            a[inst.arc_between(i, j).unwrap()] = v;
        }
        a
    }

    fn e2_star(inst: &Instance) -> Vec<f64> {
        set(inst, &[(0, 1, 0.0), (1, 0, 1.0), (1, 2, 1.5), (2, 1, 0.0)])
    }

    #[test]
    fn offer_examples() {
        assert!((compute_offer(1.0, 0.2, 0.3) - 0.55).abs() < 1e-15);
        assert_eq!(compute_offer(1.0, 1.2, 0.0), 0.0);
        assert_eq!(compute_offer(2.0, 0.0, 1.0), 1.5);
    }

    #[test]
    fn derive_from_zeros() {
        let inst = e2();
        let s = derive(&vec![0.0; 4], &inst).unwrap();
        assert_eq!(s.offer(&inst, 0, 1), Some(1.0));
        assert_eq!(s.offer(&inst, 1, 0), Some(1.0));
        assert_eq!(s.offer(&inst, 1, 2), Some(0.5));
        assert_eq!(s.offer(&inst, 2, 1), Some(0.5));
        assert_eq!(s.earnings, vec![1.0, 1.0, 0.5]);
        let single = Instance::new(2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(derive(&[0.0, 0.0], &single).unwrap().earnings, vec![0.5, 0.5]);
        assert!(matches!(derive(&[0.0], &single), Err(Error::DomainMismatch { .. })));
    }

    #[test]
    fn derive_at_e2_fixed_point() {
        let inst = e2();
        let s = derive(&e2_star(&inst), &inst).unwrap();
        assert_eq!(s.earnings, vec![0.5, 1.5, 0.0]);
    }

    #[test]
    fn one_step_from_zeros() {
        let inst = e2();
        let s = step(&derive(&vec![0.0; 4], &inst).unwrap(), &inst, 0.5);
        assert_eq!(s.alpha_between(&inst, 1, 0), Some(0.25));
        assert_eq!(s.time, 1);
        let fp = derive(&e2_star(&inst), &inst).unwrap();
        let next = step(&fp, &inst, 0.5);
        assert_eq!(next.alpha, fp.alpha);
    }

    #[test]
    fn engine_matches_pure_step() {
        let inst = t1();
        let alpha = random_alpha(&inst, 3);
        let mut engine = Engine::new(&inst, alpha.clone(), 0.3).unwrap();
        let mut s = derive(&alpha, &inst).unwrap();
        for _ in 0..20 {
            engine.advance();
            s = step(&s, &inst, 0.3);
            assert_eq!(engine.alpha(), s.alpha.as_slice());
            assert_eq!(engine.earnings(), s.earnings.as_slice());
        }
    }

    #[test]
    fn run_examples() {
        let cfg = DynamicsConfig::default();
        let single = Instance::new(2, [(0, 1, 1.0)]).unwrap();
        let out = run(&single, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.state.earnings.iter().all(|g| (g - 0.5).abs() < 1e-6));

        let out = run(&e2(), &cfg).unwrap();
        assert!(out.converged);
        for (g, want) in out.state.earnings.iter().zip([0.5, 1.5, 0.0]) {
            assert!((g - want).abs() < 1e-6, "{g} vs {want}");
        }

        let out = run(&t1(), &cfg).unwrap();
        assert!(out.converged);
        assert!(out.state.earnings.iter().all(|g| (g - 0.5).abs() < 1e-6));
    }

    #[test]
    fn pairing_examples() {
        let inst = e2();
        let s = run(&inst, &DynamicsConfig::default()).unwrap().state;
        let p = extract_pairing(&s, &inst, 0.5 / 3.0);
        assert_eq!(p.pairs, vec![(0, 1)]);
        assert_eq!(p.unpaired, vec![2]);
        assert!(p.ambiguous.is_empty());

        let single = Instance::new(2, [(0, 1, 1.0)]).unwrap();
        let s = run(&single, &DynamicsConfig::default()).unwrap().state;
        assert_eq!(extract_pairing(&s, &single, 0.1).pairs, vec![(0, 1)]);

        let tri = t1();
        let s = run(&tri, &DynamicsConfig::default()).unwrap().state;
        let p = extract_pairing(&s, &tri, 0.01);
        assert_eq!(p.ambiguous, vec![0, 1, 2]);
        assert!(p.pairs.is_empty());
    }

    #[test]
    fn sup_distance_examples() {
        let inst = e2();
        let star = e2_star(&inst);
        assert_eq!(sup_distance(&star, &star).unwrap(), 0.0);
        assert_eq!(sup_distance(&vec![0.0; 4], &star).unwrap(), 1.5);
        let mut bumped = star.clone();
        bumped[2] += 0.1;
        assert!((sup_distance(&bumped, &star).unwrap() - 0.1).abs() < 1e-15);
        assert!(sup_distance(&[0.0], &star).is_err());
    }

    #[test]
    fn trace_records_reference_distances() {
        let inst = e2();
        let star = e2_star(&inst);
        let cfg = DynamicsConfig {
            trace: TraceConfig { every: 1, reference: Some(star), subgraph: Some(vec![1]), snapshot_every: 10 },
            ..Default::default()
        };
        let out = run(&inst, &cfg).unwrap();
        assert_eq!(out.trace.records.len() as u64, out.iterations);
        assert!(out.trace.records.windows(2).all(|w| w[0].t < w[1].t));
        let last = out.trace.records.last().unwrap();
        assert!(last.u_g.unwrap() < 1e-8);
        assert!(last.u_gf.unwrap() <= last.u_g.unwrap());
        assert!(out.trace.to_csv().starts_with("t,step_change,u_g,u_gf\n"));
        assert!(!out.trace.snapshots.is_empty());
    }

    #[test]
    fn bad_kappa_rejected() {
        let cfg = DynamicsConfig { kappa: 1.0, ..Default::default() };
        assert!(matches!(run(&e2(), &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let inst = e2();
        let star = e2_star(&inst);
        let text = snapshot_to_json(&inst, &star);
        let (back, alpha) = snapshot_from_json(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(alpha, star);
    }
}
