//! Cross-checks against brute-force computations written here, without
//! going through the library's own solvers.

use bargaining::dynamics::{run, DynamicsConfig, Init};
use bargaining::instance::{generate, GeneratorSpec, Topology, WeightScheme};
use bargaining::matching::{classify, LpKind};
use bargaining::nb::nb_oracle;
use bargaining::Instance;

fn corpus() -> Vec<Instance> {
    (0..60u64)
        .filter_map(|seed| {
            let n = 3 + (seed % 4) as usize;
            generate(&GeneratorSpec::new(Topology::ErdosRenyi { n, p: 0.6 }, WeightScheme::Uniform { lo: 1.0, hi: 5.0 }, seed))
                .ok()
        })
        .filter(|inst| inst.edge_count() <= 9)
        .collect()
}

/// Best value of the fractional matching LP over half-integral points, by
/// trying every assignment in {0, ½, 1}^E. Returns (value, number of
/// maximizers, whether the maximizer is integral).
fn half_integral_lp(inst: &Instance) -> (f64, usize, bool) {
    let m = inst.edge_count();
    let mut best = f64::NEG_INFINITY;
    let mut winners: Vec<Vec<u8>> = Vec::new();
    let mut x = vec![0u8; m];
    loop {
        let mut load = vec![0u8; inst.node_count()];
        for (e, edge) in inst.edges().iter().enumerate() {
            load[edge.u] += x[e];
            load[edge.v] += x[e];
        }
        if load.iter().all(|&l| l <= 2) {
            let value: f64 = inst.edges().iter().zip(&x).map(|(e, &t)| e.w * f64::from(t) / 2.0).sum();
            if value > best + 1e-9 {
                best = value;
                winners = vec![x.clone()];
            } else if (value - best).abs() <= 1e-9 {
                winners.push(x.clone());
            }
        }
        // Next assignment in base 3.
        let mut k = 0;
        while k < m && x[k] == 2 {
            x[k] = 0;
            k += 1;
        }
        if k == m {
            break;
        }
        x[k] += 1;
    }
    let integral = winners.len() == 1 && winners[0].iter().all(|&t| t != 1);
    (best, winners.len(), integral)
}

#[test]
fn lp_value_and_kind_match_exhaustive_search() {
    for inst in corpus() {
        let c = classify(&inst).unwrap();
        let (value, count, integral) = half_integral_lp(&inst);
        assert!((c.optimum.weight - value).abs() < 1e-9, "{inst:?}");
        match c.kind {
            LpKind::Tight => assert!(count == 1 && integral),
            LpKind::PointedNotTight => assert!(count == 1 && !integral),
            LpKind::Degenerate => assert!(count > 1),
        }
    }
}

/// NB conditions written out directly: matched pairs split their weight,
/// nobody earns less than 0, no edge is under-paid, and on matched edges
/// both sides earn the same excess over their best outside option.
fn is_nb(inst: &Instance, gamma: &[f64], tol: f64) -> bool {
    let n = inst.node_count();
    let mut partner = vec![None; n];
    for e in inst.edges() {
        if (gamma[e.u] + gamma[e.v] - e.w).abs() <= tol && gamma[e.u] + gamma[e.v] > tol {
            if partner[e.u].is_some() || partner[e.v].is_some() {
                return false;
            }
            partner[e.u] = Some(e.v);
            partner[e.v] = Some(e.u);
        }
    }
    if gamma.iter().any(|&g| g < -tol) || inst.edges().iter().any(|e| gamma[e.u] + gamma[e.v] < e.w - tol) {
        return false;
    }
    for i in 0..n {
        if partner[i].is_none() && gamma[i] > tol {
            return false;
        }
    }
    let outside = |i: usize, skip: usize| {
        inst.edges()
            .iter()
            .filter_map(|e| match (e.u == i, e.v == i) {
                (true, _) if e.v != skip => Some((e.w - gamma[e.v]).max(0.0)),
                (_, true) if e.u != skip => Some((e.w - gamma[e.u]).max(0.0)),
                _ => None,
            })
            .fold(0.0, f64::max)
    };
    (0..n).all(|i| match partner[i] {
        Some(j) => ((gamma[i] - outside(i, j)) - (gamma[j] - outside(j, i))).abs() <= tol,
        None => true,
    })
}

#[test]
fn oracle_solutions_satisfy_direct_nb_conditions() {
    for inst in corpus() {
        if classify(&inst).unwrap().kind != LpKind::Tight {
            continue;
        }
        let o = nb_oracle(&inst).unwrap();
        assert!(!o.solutions.is_empty());
        for s in &o.solutions {
            assert!(is_nb(&inst, &s.gamma, 1e-7), "{inst:?} {:?}", s.gamma);
        }
    }
}

#[test]
fn converged_dynamics_land_on_nb_solutions() {
    for inst in corpus() {
        if classify(&inst).unwrap().kind != LpKind::Tight {
            continue;
        }
        let out = run(&inst, &DynamicsConfig { init: Init::UniformRandom { seed: 3 }, ..DynamicsConfig::default() }).unwrap();
        assert!(out.converged);
        assert!(is_nb(&inst, &out.state.earnings, 1e-6), "{inst:?} {:?}", out.state.earnings);
    }
}

#[test]
fn hand_solved_micro_instances() {
    // Single edge: even split.
    let one = Instance::new(2, [(0, 1, 3.0)]).unwrap();
    assert!(is_nb(&one, &[1.5, 1.5], 1e-12));
    // 0-1 (w=2), 1-2 (w=1): node 1's outside option is 1, node 0's is 0,
    // so γ1 - 1 = γ0 with γ0 + γ1 = 2.
    let e2 = Instance::new(3, [(0, 1, 2.0), (1, 2, 1.0)]).unwrap();
    assert!(is_nb(&e2, &[0.5, 1.5, 0.0], 1e-12));
    let o = nb_oracle(&e2).unwrap();
    assert_eq!(o.solutions.len(), 1);
    for (g, want) in o.solutions[0].gamma.iter().zip([0.5, 1.5, 0.0]) {
        assert!((g - want).abs() < 1e-12);
    }
    // 4-path with w = 2, 1.5, 0.8: matched (0,1) and (2,3). Node 2's
    // outside option is 1.5 - γ1 and node 3 has none, so
    // γ2 - (1.5 - γ1) = γ3 and γ2 + γ3 = 0.8; node 1 sees 1.5 - γ2 and
    // node 0 nothing, so γ1 - (1.5 - γ2) = γ0 with γ0 + γ1 = 2.
    // Solving: γ = (0.45, 1.55, 0.4, 0.4).
    let e4 = Instance::new(4, [(0, 1, 2.0), (1, 2, 1.5), (2, 3, 0.8)]).unwrap();
    assert!(is_nb(&e4, &[0.45, 1.55, 0.4, 0.4], 1e-12));
    assert!(!is_nb(&e4, &[0.5, 1.5, 0.4, 0.4], 1e-9));
}
