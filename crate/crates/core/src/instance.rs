//! Exchange-network instances: weighted undirected graphs, their on-disk
//! document format, and seeded generators for the basic structure shapes
//! (paths, cycles, blossoms, bicycles) plus random families.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected edge. Endpoints are stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

impl Edge {
    pub fn other(&self, node: usize) -> usize {
        if node == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Directed view of an edge. Edge `e` yields directed ids `2e` (`u -> v`)
/// and `2e + 1` (`v -> u`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub edge: usize,
}

#[inline]
pub fn reverse(arc: usize) -> usize {
    arc ^ 1
}

/// A bargaining instance. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    nodes: usize,
    edges: Vec<Edge>,
    arcs: Vec<Arc>,
    /// Per node: outgoing arc ids.
    out: Vec<Vec<usize>>,
}

impl Instance {
    /// Builds and validates an instance. Endpoint order of each edge is
    /// normalized; edge order is preserved.
    pub fn new(nodes: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidInstance("instance has no nodes".into()));
        }
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for (a, b, w) in edges {
            for node in [a, b] {
                if node >= nodes {
                    return Err(Error::DanglingNode { node, nodes });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWeight { u, v, weight: w });
            }
            if !seen.insert((u, v)) {
                return Err(Error::DuplicateEdge { u, v });
            }
            list.push(Edge { u, v, w });
        }
        if list.is_empty() {
            return Err(Error::InvalidInstance("instance has no edges".into()));
        }
        let mut arcs = Vec::with_capacity(2 * list.len());
        let mut out = vec![Vec::new(); nodes];
        for (e, edge) in list.iter().enumerate() {
            arcs.push(Arc { from: edge.u, to: edge.v, edge: e });
            arcs.push(Arc { from: edge.v, to: edge.u, edge: e });
            out[edge.u].push(2 * e);
            out[edge.v].push(2 * e + 1);
        }
        Ok(Self { nodes, edges: list, arcs, out })
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, a: usize) -> &Arc {
        &self.arcs[a]
    }

    /// Weight of the edge underlying arc `a`.
    pub fn arc_weight(&self, a: usize) -> f64 {
        self.edges[self.arcs[a].edge].w
    }

    /// Outgoing arcs of `node`.
    pub fn out_arcs(&self, node: usize) -> &[usize] {
        &self.out[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.out[node].len()
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[node].iter().map(move |&a| self.arcs[a].to)
    }

    /// Arc id of `i -> j`, if the edge exists.
    pub fn arc_between(&self, i: usize, j: usize) -> Option<usize> {
        self.out.get(i)?.iter().copied().find(|&a| self.arcs[a].to == j)
    }

    /// Edge id of `(i, j)`, if present.
    pub fn edge_between(&self, i: usize, j: usize) -> Option<usize> {
        self.arc_between(i, j).map(|a| self.arcs[a].edge)
    }

    /// `W`, the largest edge weight.
    pub fn max_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).fold(0.0, f64::max)
    }

    pub fn min_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).fold(f64::INFINITY, f64::min)
    }

    /// Same instance with each node's adjacency list shuffled by a seeded
    /// permutation. Results must not depend on iteration order.
    pub fn with_shuffled_adjacency(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut copy = self.clone();
        for list in &mut copy.out {
            for i in (1..list.len()).rev() {
                let j = rng.random_range(0..=i);
                list.swap(i, j);
            }
        }
        copy
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.nodes {
            return Err(Error::InvalidConfig("permutation length mismatch".into()));
        }
        Instance::new(self.nodes, self.edges.iter().map(|e| (perm[e.u], perm[e.v], e.w)))
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            nodes: self.nodes,
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord { u: e.u, v: e.v, w: Weight(e.w) })
                .collect(),
        }
    }

    /// Parses and validates an instance document.
    pub fn load(text: &str) -> Result<Self> {
        let doc: InstanceDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.into_instance()
    }

    /// Serializes to the instance document format.
    pub fn save(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("instance serializes")
    }
}

/// Edge weight in a document: a JSON number or a decimal string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight(pub f64);

impl Serialize for Weight {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Weight(x)),
            Raw::Text(s) => s
                .trim()
                .parse::<f64>()
                .map(Weight)
                .map_err(|_| serde::de::Error::custom(format!("invalid decimal weight {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub u: usize,
    pub v: usize,
    pub w: Weight,
}

/// On-disk instance format: `{"nodes": n, "edges": [{"u", "v", "w"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub nodes: usize,
    pub edges: Vec<EdgeRecord>,
}

impl InstanceDocument {
    pub fn into_instance(self) -> Result<Instance> {
        Instance::new(self.nodes, self.edges.into_iter().map(|e| (e.u, e.v, e.w.0)))
    }
}

/// Graph shape for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "topology", rename_all = "snake_case")]
pub enum Topology {
    /// `len` nodes in a line.
    Path { len: usize },
    EvenCycle { len: usize },
    OddCycle { len: usize },
    /// Odd cycle on nodes `0..cycle` with a stem of `stem` extra nodes
    /// hanging off node 0.
    Blossom { stem: usize, cycle: usize },
    /// Two odd cycles joined through a path of `path` edges.
    Bicycle { cycle_a: usize, path: usize, cycle_b: usize },
    BipartiteRandom { left: usize, right: usize, p: f64 },
    ErdosRenyi { n: usize, p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightScheme {
    /// One weight per edge, in generator edge order.
    Explicit { weights: Vec<f64> },
    /// Base weights (cycled over edges) plus uniform jitter in
    /// `[-jitter, jitter]`. Default jitter is 5% of the smallest base weight.
    Jittered { base: Vec<f64>, jitter: Option<f64> },
    /// The topology's default base pattern, jittered.
    Default { jitter: Option<f64> },
    /// Independent uniform weights in `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub topology: Topology,
    pub weights: WeightScheme,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(topology: Topology, weights: WeightScheme, seed: u64) -> Self {
        Self { topology, weights, seed }
    }
}

fn cycle_edges(nodes: &[usize]) -> Vec<(usize, usize)> {
    (0..nodes.len()).map(|i| (nodes[i], nodes[(i + 1) % nodes.len()])).collect()
}

/// Edge list and default base weights for a topology. Random topologies
/// draw structure from `rng`.
fn skeleton(topology: &Topology, rng: &mut ChaCha8Rng) -> Result<(usize, Vec<(usize, usize)>, Vec<f64>)> {
    let bad = |m: &str| Err(Error::InvalidGenerator(m.to_string()));
    match *topology {
        Topology::Path { len } => {
            if len < 2 {
                return bad("path needs at least 2 nodes");
            }
            let edges: Vec<_> = (0..len - 1).map(|i| (i, i + 1)).collect();
            let base = (0..edges.len()).map(|i| if i % 2 == 0 { 2.0 } else { 1.0 }).collect();
            Ok((len, edges, base))
        }
        Topology::EvenCycle { len } => {
            if len < 4 || len % 2 != 0 {
                return bad("even cycle length must be even and >= 4");
            }
            let edges = cycle_edges(&(0..len).collect::<Vec<_>>());
            let base = (0..len).map(|i| if i % 2 == 0 { 2.0 } else { 1.0 }).collect();
            Ok((len, edges, base))
        }
        Topology::OddCycle { len } => {
            if len < 3 || len % 2 == 0 {
                return bad("odd cycle length must be odd and >= 3");
            }
            let edges = cycle_edges(&(0..len).collect::<Vec<_>>());
            Ok((len, edges, vec![1.0; len]))
        }
        Topology::Blossom { stem, cycle } => {
            if cycle < 3 || cycle % 2 == 0 {
                return bad("blossom cycle length must be odd and >= 3");
            }
            if stem == 0 {
                return bad("blossom needs a stem of at least one edge");
            }
            let mut edges = cycle_edges(&(0..cycle).collect::<Vec<_>>());
            let mut base = vec![1.0; cycle];
            let mut prev = 0;
            for k in 0..stem {
                let node = cycle + k;
                edges.push((prev, node));
                base.push(if k % 2 == 0 { 2.0 } else { 1.0 });
                prev = node;
            }
            Ok((cycle + stem, edges, base))
        }
        Topology::Bicycle { cycle_a, path, cycle_b } => {
            if cycle_a < 3 || cycle_a % 2 == 0 || cycle_b < 3 || cycle_b % 2 == 0 {
                return bad("bicycle cycles must be odd and >= 3");
            }
            if path == 0 {
                return bad("bicycle connecting path needs at least one edge");
            }
            let n = cycle_a + cycle_b + path - 1;
            let mut edges = cycle_edges(&(0..cycle_a).collect::<Vec<_>>());
            let mut base = vec![1.0; cycle_a];
            // Path from node 0 through fresh nodes to the first node of cycle b.
            let b_start = cycle_a + path - 1;
            let mut prev = 0;
            for k in 0..path {
                let node = if k + 1 == path { b_start } else { cycle_a + k };
                edges.push((prev, node));
                base.push(if k % 2 == 0 { 2.0 } else { 1.0 });
                prev = node;
            }
            let cb: Vec<usize> = (b_start..b_start + cycle_b).collect();
            edges.extend(cycle_edges(&cb));
            base.extend(std::iter::repeat_n(1.0, cycle_b));
            if path % 2 == 0 {
                // Both junctions cannot be covered by heavy path edges; keep
                // the pattern but make the last path edge heavy too.
                let idx = cycle_a + path - 1;
                base[idx] = 2.0;
            }
            Ok((n, edges, base))
        }
        Topology::BipartiteRandom { left, right, p } => {
            if left == 0 || right == 0 || !(0.0..=1.0).contains(&p) {
                return bad("bipartite sides must be non-empty and p in [0, 1]");
            }
            let mut edges = Vec::new();
            for i in 0..left {
                for j in 0..right {
                    if rng.random::<f64>() < p {
                        edges.push((i, left + j));
                    }
                }
            }
            if edges.is_empty() {
                edges.push((0, left));
            }
            let base = vec![1.0; edges.len()];
            Ok((left + right, edges, base))
        }
        Topology::ErdosRenyi { n, p } => {
            if n < 2 || !(0.0..=1.0).contains(&p) {
                return bad("erdos_renyi needs n >= 2 and p in [0, 1]");
            }
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            if edges.is_empty() {
                edges.push((0, 1));
            }
            let base = vec![1.0; edges.len()];
            Ok((n, edges, base))
        }
    }
}

fn jittered(base: &[f64], count: usize, jitter: Option<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if base.is_empty() {
        return Err(Error::InvalidGenerator("empty base weight list".into()));
    }
    let min = base.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::InvalidGenerator("base weights must be positive".into()));
    }
    let p = jitter.unwrap_or(0.05 * min);
    if !(0.0..min).contains(&p) {
        return Err(Error::InvalidGenerator(format!("jitter {p} must lie in [0, {min})")));
    }
    Ok((0..count)
        .map(|i| {
            let b = base[i % base.len()];
            if p > 0.0 {
                b + rng.random_range(-p..=p)
            } else {
                b
            }
        })
        .collect())
}

/// Generates an instance. Output is a pure function of `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, edges, default_base) = skeleton(&spec.topology, &mut rng)?;
    let weights = match &spec.weights {
        WeightScheme::Explicit { weights } => {
            if weights.len() != edges.len() {
                return Err(Error::InvalidGenerator(format!(
                    "expected {} explicit weights, got {}",
                    edges.len(),
                    weights.len()
                )));
            }
            weights.clone()
        }
        WeightScheme::Jittered { base, jitter } => jittered(base, edges.len(), *jitter, &mut rng)?,
        WeightScheme::Default { jitter } => jittered(&default_base, edges.len(), *jitter, &mut rng)?,
        WeightScheme::Uniform { lo, hi } => {
            if !(*lo > 0.0 && hi >= lo) {
                return Err(Error::InvalidGenerator("uniform range must satisfy 0 < lo <= hi".into()));
            }
            (0..edges.len())
                .map(|_| if hi > lo { rng.random_range(*lo..=*hi) } else { *lo })
                .collect()
        }
    };
    Instance::new(n, edges.into_iter().zip(weights).map(|((u, v), w)| (u, v, w)))
}

/// Number of independent cycles (|E| - |V| + #components).
pub fn cyclomatic_number(instance: &Instance) -> usize {
    let n = instance.node_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    let mut extra = 0;
    for e in instance.edges() {
        let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
        if a == b {
            extra += 1;
        } else {
            parent[a] = b;
        }
    }
    extra
}
