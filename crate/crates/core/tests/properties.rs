use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use parn::net::{
    greedy_maximal_schedule, extra_activation, is_conflict_free, is_maximal, InterferenceKind, InterferenceModel,
    ScheduleSpace, Topology,
};
use parn::packet::{FifoQueue, Packet};
use parn::router::{update_sigma_hat, RouterKind, TokenBuckets};
use parn::sim::{run_point, Algorithm, Interference, Scenario, SimConfig};
use parn::traffic::{degree_pmf, inflate, poisson_inversion};

fn topology(nodes: usize, seed: u64) -> Topology {
    Topology::random_geometric(nodes, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn kind(k: u32) -> InterferenceKind {
    if k == 0 {
        InterferenceKind::Wireline
    } else {
        InterferenceKind::KHop(k)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conflicts_are_symmetric_and_reflexive(nodes in 3usize..12, seed: u64, k in 0u32..4) {
        let topo = topology(nodes, seed);
        let model = InterferenceModel::new(&topo, kind(k)).unwrap();
        for a in topo.link_ids() {
            prop_assert!(model.conflicts(a, a));
            for b in topo.link_ids() {
                prop_assert_eq!(model.conflicts(a, b), model.conflicts(b, a));
            }
        }
    }

    #[test]
    fn greedy_is_conflict_free_and_maximal(
        nodes in 3usize..12,
        seed: u64,
        k in 0u32..4,
        coded: bool,
        raw in prop::collection::vec(-5i32..20, 400),
    ) {
        let topo = topology(nodes, seed);
        let model = InterferenceModel::new(&topo, kind(k.max(u32::from(coded)))).unwrap();
        let space = if coded {
            ScheduleSpace::with_broadcasts(&topo, &model)
        } else {
            ScheduleSpace::point_to_point(&topo, &model)
        };
        let weights: Vec<f64> = (0..space.len()).map(|e| f64::from(raw[e % raw.len()])).collect();
        let s = greedy_maximal_schedule(&space, &weights);
        prop_assert!(is_conflict_free(&space, &s));
        prop_assert!(is_maximal(&space, &s, |e| weights[e] > 0.0));
        prop_assert!(s.elements().iter().all(|&e| weights[e] > 0.0));

        let backlogs: Vec<u64> = (0..topo.num_links()).map(|l| raw[l % raw.len()].max(0) as u64).collect();
        let full = extra_activation(&space, &s, &backlogs);
        prop_assert!(is_conflict_free(&space, &full));
        prop_assert!(s.elements().iter().all(|&e| full.contains(e)));
        prop_assert!(is_maximal(&space, &full, |e| e < space.num_links()));
    }

    #[test]
    fn destination_pmf_rows_are_distributions(nodes in 2usize..15, seed: u64) {
        let topo = topology(nodes, seed);
        let pmf = degree_pmf(&topo);
        for n in 0..nodes {
            let row = pmf.row(n);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(row[n], 0.0);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn inflation_never_loses_packets(mean in 0.0f64..5.0, eps in 0.0f64..0.99, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real = poisson_inversion(mean, &mut rng);
        let shadow = inflate(real, eps, &mut rng);
        prop_assert!(shadow >= real && shadow <= 2 * real);
        prop_assert_eq!(inflate(real, 0.0, &mut rng), real);
    }

    #[test]
    fn sigma_hat_is_a_convex_combination(prev in 0.0f64..10.0, sigma in 0.0f64..10.0, beta in 0.001f64..0.999) {
        let next = update_sigma_hat(prev, sigma, beta);
        prop_assert!(next >= prev.min(sigma) - 1e-12 && next <= prev.max(sigma) + 1e-12);
    }

    #[test]
    fn token_buckets_stay_in_bounds(
        cap in 1u32..50,
        ops in prop::collection::vec((any::<bool>(), 0usize..4, 0usize..3, 0u64..5), 0..300),
    ) {
        let mut b = TokenBuckets::new(4, 3, cap);
        for (route, arc, dest, sigma) in ops {
            if route {
                let chosen = b.route(0..4, dest);
                prop_assert!(chosen < 4);
            } else {
                b.drain(arc, dest, sigma);
            }
            prop_assert!(b.max_tokens() <= cap);
        }
    }

    #[test]
    fn fifo_preserves_order(ops in prop::collection::vec(any::<bool>(), 0..200)) {
        let mut q = FifoQueue::new();
        let (mut pushed, mut popped) = (0u64, 0u64);
        for push in ops {
            if push {
                q.push(Packet::new(0, 1, pushed));
                pushed += 1;
            } else if let Some(p) = q.pop() {
                prop_assert_eq!(p.birth, popped);
                popped += 1;
            }
        }
        prop_assert_eq!(q.order_violations(), 0);
        prop_assert_eq!(q.len() as u64, pushed - popped);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Every engine keeps every audited invariant on random small networks.
    #[test]
    fn engines_audit_clean(
        nodes in 3usize..9,
        seed: u64,
        algorithm in prop_oneof![
            Just(Algorithm::Bp),
            Just(Algorithm::Mbp),
            Just(Algorithm::Parn),
            Just(Algorithm::ParnCoding),
        ],
        token: bool,
        extra: bool,
        m in 0i64..5,
        lambda in 0.0f64..0.4,
    ) {
        let topo = topology(nodes, seed);
        let cfg = SimConfig {
            algorithm,
            m,
            router: if token { RouterKind::Token } else { RouterKind::Probabilistic },
            extra_activation: extra,
            interference: Interference::KHop,
            k: 1,
            lambda: vec![lambda],
            slots: 600,
            warmup: Some(100),
            seed,
            audit: true,
            ..SimConfig::default()
        };
        let s = Scenario::with_topology(cfg, topo).unwrap();
        let p = run_point(&s, 0).unwrap();
        let log = p.violations.clone().unwrap();
        prop_assert!(log.is_clean(), "{:?}", log);
        prop_assert!(p.delivered <= p.arrivals);
        prop_assert!(p.mean_delay.is_none_or(|d| d >= 1.0));
        if let Some(st) = &p.stability {
            prop_assert!(st.links.iter().all(|l| l.rho.is_none_or(|r| r >= 0.0)));
        }
    }
}

#[test]
fn conflict_masks_match_hop_distances() {
    let topo = topology(10, 3);
    let dist = topo.undirected_distances();
    for k in 1..4 {
        let model = InterferenceModel::new(&topo, InterferenceKind::KHop(k)).unwrap();
        for a in topo.link_ids() {
            for b in topo.link_ids() {
                let (la, lb) = (topo.link(a), topo.link(b));
                let near = [la.from, la.to]
                    .iter()
                    .flat_map(|&x| [lb.from, lb.to].map(|y| dist[x][y]))
                    .min()
                    .unwrap();
                assert_eq!(model.conflicts(a, b), near < k, "k={k} {a} {b}");
            }
        }
    }
    let wired = InterferenceModel::new(&topo, InterferenceKind::Wireline).unwrap();
    assert!(topo.link_ids().all(|a| wired.conflict_set(a) == [a]));
}
