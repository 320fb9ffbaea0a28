mod common;

use common::{random_instance, Instance};
use proptest::prelude::*;
use ranknet::gbs::{self, policy_outcomes, select_query, PairSet};
use ranknet::net::{build_rank_net_counted, net_condition, radius_rank, voronoi_balls};
use ranknet::oracle::{Answer, LoggingOracle};
use ranknet::prior::doubling_constant;
use ranknet::search::{
    nearest_in_net, repetition_factor, tournament, Algorithm, NoiseParams, SearchContext, Session,
    Step,
};
use ranknet::{CostCounters, ExactOracle, GbsVariant, Prior, RankTable};

fn table(inst: &Instance) -> RankTable {
    RankTable::build(&inst.dataset, inst.metric, &inst.prior).unwrap()
}

fn context(inst: &Instance) -> SearchContext {
    SearchContext::with_tree(table(inst)).unwrap()
}

const ALGORITHMS: [Algorithm; 5] = [
    Algorithm::RankNet,
    Algorithm::Tree,
    Algorithm::Gbs {
        variant: GbsVariant::Full,
    },
    Algorithm::Gbs {
        variant: GbsVariant::Fast,
    },
    Algorithm::Gbs {
        variant: GbsVariant::Sparse,
    },
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn answers_match_distances(seed in any::<u64>()) {
        let inst = random_instance(seed, 30);
        let t = table(&inst);
        let n = inst.n();
        for z in 0..n {
            for x in 0..n {
                for y in 0..n {
                    let a = t.answer(z, x, y);
                    prop_assert_eq!(a.sign(), common::answer(&inst, z, x, y));
                    if a == Answer::Plus {
                        prop_assert_eq!(t.answer(z, y, x), Answer::Minus);
                    }
                }
            }
        }
    }

    #[test]
    fn distinct_items_are_separated(seed in any::<u64>()) {
        let inst = random_instance(seed, 30);
        let t = table(&inst);
        for z in 0..inst.n() {
            for w in 0..inst.n() {
                if z != w && !t.indistinguishable(z, w) {
                    prop_assert_eq!(t.answer(w, w, z), Answer::Plus);
                    prop_assert_eq!(t.answer(z, w, z), Answer::Minus);
                }
            }
        }
    }

    #[test]
    fn ball_mass_is_monotone(seed in any::<u64>()) {
        let inst = random_instance(seed, 30);
        let t = table(&inst);
        for x in 0..inst.n() {
            let cum = t.cum_masses(x);
            prop_assert!(cum[0] >= inst.prior.mass(x));
            prop_assert!(cum.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn radius_rank_matches_sorted_scan(seed in any::<u64>(), rho_exp in 0u32..8) {
        let inst = random_instance(seed, 30);
        let t = table(&inst);
        let rho = 0.5f64.powi(rho_exp as i32);
        let domain: Vec<usize> = (0..inst.n()).filter(|z| z % 3 != 1).collect();
        for &y in &domain {
            prop_assert_eq!(radius_rank(&t, &domain, y, rho).class_index, common::radius_rank(&inst, &domain, y, rho));
        }
    }

    #[test]
    fn doubling_constant_matches_double_loop(seed in any::<u64>()) {
        let inst = random_instance(seed, 30);
        let fast = doubling_constant(&inst.dataset, inst.metric, &inst.prior);
        prop_assert!(common::rel_close(fast, common::doubling_constant(&inst), 1e-12));
        prop_assert!(fast >= 1.0);
    }

    #[test]
    fn entropy_matches_naive(weights in prop::collection::vec(0.0f64..10.0, 1..40)) {
        prop_assume!(weights.iter().any(|w| *w > 0.0));
        let p = Prior::from_weights(weights.clone()).unwrap();
        let total: f64 = weights.iter().sum();
        let mut h = 0.0;
        let mut hmax: f64 = 0.0;
        for w in &weights {
            if *w > 0.0 {
                let m = w / total;
                h -= m * m.log2();
                hmax = hmax.max(-m.log2());
            }
        }
        prop_assert!((p.entropy() - h).abs() <= 1e-9);
        prop_assert!((p.hmax() - hmax).abs() <= 1e-9);
        prop_assert!(p.entropy() <= p.hmax() + 1e-9);
    }

    #[test]
    fn gbs_objective_matches_naive(seed in any::<u64>()) {
        let inst = random_instance(seed, 30);
        let t = table(&inst);
        let space: Vec<usize> = (0..inst.n()).filter(|z| z % 2 == 0).collect();
        for x in 0..inst.n() {
            for y in 0..inst.n() {
                prop_assert_eq!(gbs::gbs_objective(&t, &space, x, y), common::gbs_objective(&inst, &space, x, y));
            }
        }
    }

    #[test]
    fn nets_are_maximal_and_cover(seed in any::<u64>(), rho_exp in 1u32..6) {
        let inst = random_instance(seed, 30);
        let t = table(&inst);
        let rho = 0.5f64.powi(rho_exp as i32);
        let domain: Vec<usize> = (0..inst.n()).collect();
        let members = ranknet::net::greedy_net(&t, &domain, rho, &domain);
        let radius = |y| radius_rank(&t, &domain, y, rho);
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                prop_assert!(net_condition(&t, &radius(a), &radius(b)));
            }
        }
        for &z in domain.iter().filter(|z| !members.contains(z)) {
            prop_assert!(members.iter().any(|&y| !net_condition(&t, &radius(y), &radius(z))));
            prop_assert!(members.iter().any(|&y| t.rank_of(y, z) <= radius(y).class_index));
        }
        let balls = voronoi_balls(&t, &domain, &members);
        for &z in &domain {
            prop_assert!(balls.iter().any(|b| b.members.contains(&z)));
        }
    }

    #[test]
    fn net_construction_cost(seed in any::<u64>()) {
        let inst = random_instance(seed, 30);
        let t = table(&inst);
        let domain: Vec<usize> = (0..inst.n()).collect();
        let root = inst.prior.support().next().unwrap();
        let net = build_rank_net_counted(&t, root, &domain, &mut CostCounters::default()).unwrap();
        let log_n = (t.len() as f64).log2().ceil() + 1.0;
        for a in &net.attempts {
            let bound = 8.0 * domain.len() as f64 * (a.net_size as f64 + log_n);
            prop_assert!(a.table_lookups as f64 <= bound, "{} > {}", a.table_lookups, bound);
        }
    }

    #[test]
    fn every_algorithm_finds_every_target(seed in any::<u64>()) {
        let inst = random_instance(seed, 20);
        let ctx = context(&inst);
        for t in inst.prior.support() {
            for alg in ALGORITHMS {
                let mut session = Session::new(&ctx, alg).unwrap();
                let mut oracle = LoggingOracle::new(ExactOracle::new(&ctx.table, t));
                loop {
                    prop_assert!(session.current_domain().contains(&t));
                    match session.next() {
                        Step::Query { x, y } => {
                            let a = ranknet::Oracle::ask(&mut oracle, x, y);
                            session.answer(a).unwrap();
                        }
                        Step::Done { result } => {
                            prop_assert!(ctx.table.indistinguishable(result, t), "{} found {} for {}", alg.name(), result, t);
                            break;
                        }
                    }
                }
                prop_assert_eq!(session.log(), &oracle.log);
                prop_assert_eq!(session.counters().oracle_queries as usize, oracle.log.query_count());
            }
        }
    }

    #[test]
    fn online_and_tree_ask_the_same_queries(seed in any::<u64>()) {
        let inst = random_instance(seed, 30);
        let ctx = context(&inst);
        for t in inst.prior.support() {
            let a = ranknet::search::rank_net_search(&ctx, &mut ExactOracle::new(&ctx.table, t)).unwrap();
            let b = ranknet::search::tree_search(&ctx, &mut ExactOracle::new(&ctx.table, t)).unwrap();
            prop_assert_eq!(a.log, b.log);
        }
    }

    #[test]
    fn sessions_agree_with_policy_enumeration(seed in any::<u64>()) {
        let inst = random_instance(seed, 20);
        let ctx = context(&inst);
        let sets = [
            (GbsVariant::Full, PairSet::All),
            (GbsVariant::Fast, PairSet::WithinVersionSpace),
            (GbsVariant::Sparse, (*ctx.same_net_pairs.clone().unwrap()).clone()),
        ];
        for (variant, pairs) in sets {
            for o in policy_outcomes(&ctx.table, &pairs).unwrap() {
                let out = ranknet::search::gbs_search(&ctx, &mut ExactOracle::new(&ctx.table, o.target), variant).unwrap();
                prop_assert_eq!(out.result, o.result);
                prop_assert_eq!(out.queries as u64, o.queries);
                prop_assert_eq!(out.counters, o.counters);
            }
        }
    }

    #[test]
    fn gbs_queries_make_progress(seed in any::<u64>()) {
        let inst = random_instance(seed, 20);
        let t = table(&inst);
        let mut space: Vec<usize> = (0..inst.n()).collect();
        let target = inst.prior.support().last().unwrap();
        while gbs::resolved_item(&t, &space).is_none() {
            let mut c = CostCounters::default();
            let (x, y) = select_query(&t, &space, &PairSet::WithinVersionSpace, &mut c).unwrap();
            let plus = space.iter().filter(|&&z| t.answer(z, x, y) == Answer::Plus).count();
            prop_assert!(plus > 0 && plus < space.len());
            let m = space.len() as u64;
            prop_assert_eq!(c.table_lookups, m * (m - 1) * m);
            space = gbs::update_version_space(&t, &space, (x, y), t.answer(target, x, y)).unwrap();
            prop_assert!(space.contains(&target));
        }
    }

    #[test]
    fn tournament_is_sound_without_noise(seed in any::<u64>(), target in 0usize..30) {
        let inst = random_instance(seed, 30);
        let t = table(&inst);
        let target = target % inst.n();
        let members: Vec<usize> = (0..inst.n()).collect();
        let dists: Vec<f64> = members.iter().map(|&y| inst.d(y, target)).collect();
        let mut sorted = dists.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] < w[1]));
        let (w, q) = tournament(&mut ExactOracle::new(&t, target), &members, 3);
        prop_assert_eq!(dists[w], sorted[0]);
        prop_assert_eq!(q, 3 * (members.len() - 1));
        prop_assert_eq!(dists[nearest_in_net(&mut ExactOracle::new(&t, target), &members).0], sorted[0]);
    }

    #[test]
    fn repetition_factor_is_odd_and_grows(level in 1u32..30, m in 2usize..200, eps in 0.0f64..0.45) {
        let p = NoiseParams::new(eps, 0.1).unwrap();
        let k = repetition_factor(level, m, &p);
        prop_assert_eq!(k % 2, 1);
        prop_assert!(repetition_factor(level + 1, m, &p) >= k);
        prop_assert!(repetition_factor(level, m * 2, &p) >= k);
    }
}

#[test]
fn full_gbs_cost_is_quadratic_in_n() {
    let inst = random_instance(42, 30);
    let t = table(&inst);
    let n = t.len() as u64;
    let space: Vec<usize> = (0..inst.n()).filter(|z| z % 2 == 0).collect();
    let mut c = CostCounters::default();
    select_query(&t, &space, &PairSet::All, &mut c);
    let v = space.len() as u64;
    assert!(c.table_lookups >= n * n * v && c.table_lookups <= 8 * n * n * v);
}

#[test]
fn single_tournament_failure_rate() {
    use ranknet::oracle::NoisyOracle;
    use ranknet::Dataset;
    let ds = Dataset::new("grid", (0..8).map(|i| vec![i as f64 * 1.5]).collect()).unwrap();
    let prior = Prior::uniform(8).unwrap();
    let t = RankTable::build(&ds, Default::default(), &prior).unwrap();
    let members = [0, 2, 5, 7];
    let (level, eps) = (1, 0.25);
    let p = NoiseParams::new(eps, 0.1).unwrap();
    let k = repetition_factor(level, members.len(), &p);
    let trials = 2000;
    let failures = (0..trials)
        .filter(|&s| {
            let mut o = NoisyOracle::new(ExactOracle::new(&t, 4), eps, s).unwrap();
            // target at 6.0; members at 0, 3, 7.5 and 10.5
            tournament(&mut o, &members, k).0 != 5
        })
        .count();
    let allowed = (level as f64 + 10.0).powi(-2);
    let rate = failures as f64 / trials as f64;
    let sigma = (allowed * (1.0 - allowed) / trials as f64).sqrt();
    assert!(rate <= allowed + 3.0 * sigma, "failure rate {rate}");
}
