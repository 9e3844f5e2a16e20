//! Buyer/seller partial order on message vectors for bipartite instances,
//! and runs from the two extremal vectors.

use std::collections::VecDeque;

use serde::Serialize;

use crate::dynamics::{DynamicsConfig, Engine, MessageState};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::nb::{dotted_labels, Dotted, NBSolution, TOL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bipartition {
    pub buyers: Vec<usize>,
    pub sellers: Vec<usize>,
    #[serde(skip)]
    is_buyer: Vec<bool>,
}

impl Bipartition {
    pub fn is_buyer(&self, i: usize) -> bool {
        self.is_buyer[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buyer,
    Seller,
}

/// Two-colors the graph. In every component the lowest-numbered node is a
/// buyer, so node 0 is always a buyer. Fails with an odd cycle.
pub fn check_bipartite(inst: &Instance) -> Result<Bipartition> {
    let n = inst.node_count();
    let mut color: Vec<Option<bool>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if color[root].is_some() {
            continue;
        }
        color[root] = Some(true);
        let mut queue = VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            let cx = color[x].expect("queued nodes are colored");
            for y in inst.neighbors(x) {
                match color[y] {
                    None => {
                        color[y] = Some(!cx);
                        parent[y] = x;
                        queue.push_back(y);
                    }
                    Some(cy) if cy == cx => return Err(Error::NotBipartite(odd_cycle(&parent, x, y))),
                    Some(_) => {}
                }
            }
        }
    }
    let is_buyer: Vec<bool> = color.into_iter().map(|c| c.expect("all colored")).collect();
    Ok(Bipartition {
        buyers: (0..n).filter(|&i| is_buyer[i]).collect(),
        sellers: (0..n).filter(|&i| !is_buyer[i]).collect(),
        is_buyer,
    })
}

/// Cycle closed by the same-colored edge `(x, y)` through the BFS tree.
fn odd_cycle(parent: &[usize], x: usize, y: usize) -> Vec<usize> {
    let chain = |mut v: usize| {
        let mut c = vec![v];
        while parent[v] != usize::MAX {
            v = parent[v];
            c.push(v);
        }
        c
    };
    let (cx, cy) = (chain(x), chain(y));
    let lca = *cx.iter().find(|v| cy.contains(v)).expect("same BFS tree");
    let mut cycle: Vec<usize> = cx.iter().copied().take_while(|&v| v != lca).collect();
    cycle.push(lca);
    let back: Vec<usize> = cy.iter().copied().take_while(|&v| v != lca).collect();
    cycle.extend(back.into_iter().rev());
    let start = (0..cycle.len()).min_by_key(|&k| cycle[k]).expect("non-empty");
    cycle.rotate_left(start);
    if cycle.len() > 2 && cycle[cycle.len() - 1] < cycle[1] {
        cycle[1..].reverse();
    }
    cycle
}

/// `alpha ⪰ beta` (with slack `tol`): buyers' outgoing messages are at least
/// as large and sellers' outgoing messages at most as large.
pub fn order_leq(beta: &[f64], alpha: &[f64], part: &Bipartition, inst: &Instance, tol: f64) -> bool {
    inst.arcs().iter().enumerate().all(|(a, arc)| {
        if part.is_buyer(arc.from) {
            alpha[a] >= beta[a] - tol
        } else {
            alpha[a] <= beta[a] + tol
        }
    })
}

/// `α^top` for [`Side::Buyer`], `α^bot` for [`Side::Seller`].
pub fn extremal_init(inst: &Instance, part: &Bipartition, side: Side) -> Vec<f64> {
    let w = inst.max_weight();
    inst.arcs()
        .iter()
        .map(|arc| if part.is_buyer(arc.from) == (side == Side::Buyer) { w } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalOutcome {
    pub side: Side,
    pub solution: NBSolution,
    pub state: MessageState,
    pub iterations: u64,
}

/// Runs from the extremal vector of `side`, asserting monotonicity at every
/// step, and reads the NB solution off the strong-dotted edges.
pub fn run_extremal(inst: &Instance, part: &Bipartition, side: Side, config: &DynamicsConfig) -> Result<ExtremalOutcome> {
    config.validate()?;
    let mut engine = Engine::new(inst, extremal_init(inst, part, side), config.kappa)?;
    let threshold = config.kappa * config.eps_conv;
    let mut prev = engine.alpha().to_vec();
    loop {
        if engine.time() >= config.max_iters {
            return Err(Error::NoConvergence(config.max_iters));
        }
        let change = engine.advance();
        let cur = engine.alpha();
        let monotone = match side {
            Side::Buyer => order_leq(cur, &prev, part, inst, 1e-12),
            Side::Seller => order_leq(&prev, cur, part, inst, 1e-12),
        };
        if !monotone {
            return Err(Error::Invariant(format!("trajectory from {side:?} extreme not monotone at t={}", engine.time())));
        }
        prev.copy_from_slice(cur);
        if change <= threshold {
            break;
        }
    }
    let state = engine.state();
    let labels = dotted_labels(&state, inst, TOL);
    let strong = (0..labels.len()).filter(|&e| labels[e] == Dotted::Strong).collect();
    let mut solution = NBSolution::new(strong, state.earnings.clone());
    solution.certify(inst, TOL);
    Ok(ExtremalOutcome { side, solution, iterations: state.time, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{random_alpha, step, derive};

    fn e2() -> Instance {
        Instance::new(3, [(0, 1, 2.0), (1, 2, 1.0)]).unwrap()
    }

    fn b1() -> Instance {
        Instance::new(4, [(0, 1, 10.0), (1, 2, 9.0), (2, 3, 10.0), (0, 3, 9.0)]).unwrap()
    }

    #[test]
    fn partition_examples() {
        let p = check_bipartite(&e2()).unwrap();
        assert_eq!((p.buyers.clone(), p.sellers.clone()), (vec![0, 2], vec![1]));
        let t1 = Instance::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        assert_eq!(check_bipartite(&t1), Err(Error::NotBipartite(vec![0, 1, 2])));
        let p = check_bipartite(&b1()).unwrap();
        assert_eq!((p.buyers, p.sellers), (vec![0, 2], vec![1, 3]));
    }

    #[test]
    fn odd_cycle_witness_is_a_cycle() {
        let c5 = Instance::new(6, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 0, 1.0), (4, 5, 1.0)]).unwrap();
        let Err(Error::NotBipartite(cycle)) = check_bipartite(&c5) else { panic!("expected odd cycle") };
        assert_eq!(cycle.len() % 2, 1);
        for k in 0..cycle.len() {
            assert!(c5.edge_between(cycle[k], cycle[(k + 1) % cycle.len()]).is_some());
        }
    }

    #[test]
    fn order_examples() {
        let inst = e2();
        let p = check_bipartite(&inst).unwrap();
        let a = random_alpha(&inst, 1);
        assert!(order_leq(&a, &a, &p, &inst, 0.0));
        let top = extremal_init(&inst, &p, Side::Buyer);
        assert!(order_leq(&a, &top, &p, &inst, 0.0));
        let bot = extremal_init(&inst, &p, Side::Seller);
        assert!(order_leq(&bot, &a, &p, &inst, 0.0));
        let mut alpha = vec![0.0; 4];
        let mut beta = vec![0.0; 4];
        alpha[inst.arc_between(0, 1).unwrap()] = 0.5;
        beta[inst.arc_between(0, 1).unwrap()] = 0.4;
        assert!(order_leq(&beta, &alpha, &p, &inst, 0.0));
        assert!(!order_leq(&alpha, &beta, &p, &inst, 0.0));
    }

    #[test]
    fn extremal_examples() {
        let inst = e2();
        let p = check_bipartite(&inst).unwrap();
        let top = extremal_init(&inst, &p, Side::Buyer);
        for (i, j, v) in [(0, 1, 2.0), (2, 1, 2.0), (1, 0, 0.0), (1, 2, 0.0)] {
            assert_eq!(top[inst.arc_between(i, j).unwrap()], v);
        }
        let single = Instance::new(2, [(0, 1, 1.0)]).unwrap();
        let ps = check_bipartite(&single).unwrap();
        assert_eq!(extremal_init(&single, &ps, Side::Seller), vec![0.0, 1.0]);
        let b = b1();
        let pb = check_bipartite(&b).unwrap();
        let top = extremal_init(&b, &pb, Side::Buyer);
        for arc in 0..b.arc_count() {
            if pb.is_buyer(b.arc(arc).from) {
                assert_eq!(top[arc], 10.0);
            }
        }
    }

    #[test]
    fn extremal_runs_on_four_cycle() {
        let inst = b1();
        let p = check_bipartite(&inst).unwrap();
        let cfg = DynamicsConfig::default();
        let up = run_extremal(&inst, &p, Side::Buyer, &cfg).unwrap();
        assert!(up.solution.certified());
        for (g, want) in up.solution.gamma.iter().zip([9.0, 1.0, 9.0, 1.0]) {
            assert!((g - want).abs() < 1e-4, "{:?}", up.solution.gamma);
        }
        let down = run_extremal(&inst, &p, Side::Seller, &cfg).unwrap();
        for (g, want) in down.solution.gamma.iter().zip([1.0, 9.0, 1.0, 9.0]) {
            assert!((g - want).abs() < 1e-4, "{:?}", down.solution.gamma);
        }
        assert!(order_leq(&down.state.alpha, &up.state.alpha, &p, &inst, 1e-9));
    }

    #[test]
    fn extremal_runs_coincide_on_e2() {
        let inst = e2();
        let p = check_bipartite(&inst).unwrap();
        for side in [Side::Buyer, Side::Seller] {
            let out = run_extremal(&inst, &p, side, &DynamicsConfig::default()).unwrap();
            for (g, want) in out.solution.gamma.iter().zip([0.5, 1.5, 0.0]) {
                assert!((g - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn one_step_preserves_order() {
        let inst = b1();
        let p = check_bipartite(&inst).unwrap();
        let top = derive(&extremal_init(&inst, &p, Side::Buyer), &inst).unwrap();
        let mid = derive(&random_alpha(&inst, 4), &inst).unwrap();
        let (a, b) = (step(&top, &inst, 0.5), step(&mid, &inst, 0.5));
        assert!(order_leq(&b.alpha, &a.alpha, &p, &inst, 1e-12));
    }
}
