use proptest::prelude::*;

use bargaining::bipartite::{check_bipartite, order_leq};
use bargaining::dynamics::{compute_offer, derive, run, step, sup_distance, DynamicsConfig, Init};
use bargaining::instance::{generate, GeneratorSpec, Topology, WeightScheme};
use bargaining::matching::{classify, dual_check, enumerate_corners};
use bargaining::path::{
    mass_step, path_order_leq, simplified_step, Boundary, Injection, MassState, PathGraph, PathMessages,
    SimplifiedPathState,
};
use bargaining::Instance;

fn arb_instance() -> impl Strategy<Value = Instance> {
    (3usize..8, 0.3f64..0.9, any::<u64>()).prop_filter_map("needs an edge", |(n, p, seed)| {
        generate(&GeneratorSpec::new(Topology::ErdosRenyi { n, p }, WeightScheme::Uniform { lo: 0.5, hi: 4.0 }, seed)).ok()
    })
}

fn arb_bipartite() -> impl Strategy<Value = Instance> {
    (2usize..5, 2usize..5, any::<u64>()).prop_filter_map("needs an edge", |(l, r, seed)| {
        generate(&GeneratorSpec::new(
            Topology::BipartiteRandom { left: l, right: r, p: 0.7 },
            WeightScheme::Uniform { lo: 0.5, hi: 4.0 },
            seed,
        ))
        .ok()
    })
}

/// Instance with two message vectors drawn from `[0, W]`.
fn arb_pair() -> impl Strategy<Value = (Instance, Vec<f64>, Vec<f64>)> {
    arb_instance().prop_flat_map(|inst| {
        let w = inst.max_weight();
        let m = inst.arc_count();
        (Just(inst), prop::collection::vec(0.0..=w, m), prop::collection::vec(0.0..=w, m))
    })
}

fn arb_path() -> impl Strategy<Value = (PathGraph, PathMessages, PathMessages, f64, f64)> {
    (1usize..10, any::<bool>()).prop_flat_map(|(len, first)| {
        let msgs = || (prop::collection::vec(-2.0..4.0f64, len), prop::collection::vec(-2.0..4.0f64, len));
        (
            prop::collection::vec(0.5..3.0f64, len).prop_map(move |w| PathGraph::alternating(w, first)),
            msgs().prop_map(|(fwd, bwd)| PathMessages { fwd, bwd }),
            msgs().prop_map(|(fwd, bwd)| PathMessages { fwd, bwd }),
            0.0..2.0f64,
            0.0..2.0f64,
        )
    })
}

fn simplified(path: &PathGraph, a: PathMessages, bl: f64, br: f64) -> SimplifiedPathState {
    SimplifiedPathState::new(path.clone(), a, Boundary::Constant(bl), Boundary::Constant(br), 0.5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn step_is_non_expansive((inst, a, b) in arb_pair(), kappa in 0.05f64..0.95) {
        let sa = step(&derive(&a, &inst).unwrap(), &inst, kappa);
        let sb = step(&derive(&b, &inst).unwrap(), &inst, kappa);
        prop_assert!(sup_distance(&sa.alpha, &sb.alpha).unwrap() <= sup_distance(&a, &b).unwrap() + 1e-12);
    }

    #[test]
    fn step_stays_in_range((inst, a, _b) in arb_pair(), kappa in 0.05f64..0.95) {
        let w = inst.max_weight();
        let s = step(&derive(&a, &inst).unwrap(), &inst, kappa);
        prop_assert!(s.alpha.iter().all(|&x| (0.0..=w).contains(&x)));
        prop_assert!(s.offers.iter().all(|&x| (0.0..=w).contains(&x)));
    }

    #[test]
    fn adjacency_order_is_irrelevant((inst, a, _b) in arb_pair(), seed in any::<u64>()) {
        let shuffled = inst.with_shuffled_adjacency(seed);
        let x = step(&derive(&a, &inst).unwrap(), &inst, 0.5);
        let y = step(&derive(&a, &shuffled).unwrap(), &shuffled, 0.5);
        prop_assert_eq!(x, y);
    }

    #[test]
    fn offer_is_lipschitz(w in 0.1f64..5.0, a in 0.0f64..5.0, b in 0.0f64..5.0, da in -1.0f64..1.0, db in -1.0f64..1.0) {
        let (a2, b2) = ((a + da).max(0.0), (b + db).max(0.0));
        let diff = (compute_offer(w, a, b) - compute_offer(w, a2, b2)).abs();
        prop_assert!(diff <= (a - a2).abs().max((b - b2).abs()) + 1e-12);
    }

    #[test]
    fn corners_never_beat_feasible_duals(inst in arb_instance(), raise in prop::collection::vec(0.0f64..2.0, 8)) {
        // γ_i = largest incident weight is always dual feasible.
        let gamma: Vec<f64> = (0..inst.node_count())
            .map(|i| inst.out_arcs(i).iter().map(|&a| inst.arc_weight(a)).fold(0.0, f64::max) + raise[i % raise.len()])
            .collect();
        let dual = dual_check(&gamma, &inst, 0.0);
        prop_assert!(dual.feasible);
        for c in enumerate_corners(&inst).unwrap() {
            prop_assert!(c.weight <= dual.objective + 1e-12);
        }
    }

    #[test]
    fn bipartite_step_preserves_order(inst in arb_bipartite(), seed in any::<u64>(), u in prop::collection::vec(0.0f64..1.0, 64)) {
        let part = check_bipartite(&inst).unwrap();
        let w = inst.max_weight();
        let hi = bargaining::dynamics::random_alpha(&inst, seed);
        let lo: Vec<f64> = hi.iter().enumerate().map(|(a, &x)| {
            let t = u[a % u.len()];
            if part.is_buyer(inst.arc(a).from) { x * (1.0 - t) } else { x + t * (w - x) }
        }).collect();
        prop_assert!(order_leq(&lo, &hi, &part, &inst, 0.0));
        let shi = step(&derive(&hi, &inst).unwrap(), &inst, 0.5);
        let slo = step(&derive(&lo, &inst).unwrap(), &inst, 0.5);
        prop_assert!(order_leq(&slo.alpha, &shi.alpha, &part, &inst, 1e-12));
    }

    #[test]
    fn simplified_step_is_non_expansive((path, a, b, bl, br) in arb_path()) {
        let before = a.sup_distance(&b);
        let x = simplified_step(&simplified(&path, a, bl, br));
        let y = simplified_step(&simplified(&path, b, bl, br));
        prop_assert!(x.alpha.sup_distance(&y.alpha) <= before + 1e-12);
    }

    #[test]
    fn simplified_step_preserves_path_order((path, a, b, bl, br) in arb_path()) {
        // Build beta below alpha in the path order.
        let sign = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
        let beta = PathMessages {
            fwd: a.fwd.iter().zip(&b.fwd).enumerate().map(|(i, (x, d))| x - sign(i) * d.abs()).collect(),
            bwd: a.bwd.iter().zip(&b.bwd).enumerate().map(|(i, (x, d))| x + sign(i) * d.abs()).collect(),
        };
        prop_assert!(path_order_leq(&beta, &a, 0.0));
        let x = simplified_step(&simplified(&path, a, bl, br));
        let y = simplified_step(&simplified(&path, beta, bl, br));
        prop_assert!(path_order_leq(&y.alpha, &x.alpha, 1e-12));
    }

    #[test]
    fn mass_without_injection_never_grows((path, a, _b, _bl, _br) in arb_path()) {
        let m = MassState { rho: PathMessages { fwd: a.fwd.iter().map(|x| x.abs()).collect(), bwd: a.bwd.iter().map(|x| x.abs()).collect() } };
        let next = mass_step(&m, &path, 0.5, Injection::None);
        prop_assert!(next.total() <= m.total() + 1e-12);
        prop_assert!(next.rho.fwd.iter().chain(&next.rho.bwd).all(|&x| x >= 0.0));
    }

    #[test]
    fn documents_round_trip(inst in arb_instance()) {
        let back = Instance::load(&inst.save()).unwrap();
        prop_assert_eq!(back, inst);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn relabeling_commutes_with_analysis(inst in arb_instance(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut perm: Vec<usize> = (0..inst.node_count()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let other = inst.relabeled(&perm).unwrap();

        let (c1, c2) = (classify(&inst).unwrap(), classify(&other).unwrap());
        prop_assert_eq!(c1.kind, c2.kind);
        prop_assert!((c1.optimum.weight - c2.optimum.weight).abs() < 1e-12);

        let cfg = DynamicsConfig { init: Init::Zeros, max_iters: 20_000, ..DynamicsConfig::default() };
        let (r1, r2) = (run(&inst, &cfg).unwrap(), run(&other, &cfg).unwrap());
        for i in 0..inst.node_count() {
            prop_assert!((r1.state.earnings[i] - r2.state.earnings[perm[i]]).abs() < 1e-9);
        }
    }
}
