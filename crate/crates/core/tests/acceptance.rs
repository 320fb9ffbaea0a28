//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::Instant;

use ranknet::bench::{evaluate, run_bench, AlgoName, DatasetSpec, ExperimentConfig, Prepared};
use ranknet::gbs::{self, exact_opt, policy_outcomes, PairSet};
use ranknet::net::radius_rank;
use ranknet::prior::{doubling_constant, PriorSpec};
use ranknet::search::{rank_net_search, tree_search, NoiseParams};
use ranknet::{ExactOracle, Metric, RankTable};

type Outcome = Result<String, String>;

fn prepare(spec: &str, prior: PriorSpec, seed: u64) -> Prepared {
    Prepared::from_spec(&spec.parse().unwrap(), &prior, Metric::Euclidean, seed).unwrap()
}

fn l4() -> Prepared {
    prepare("l4", PriorSpec::Uniform, 0)
}

fn iris() -> Prepared {
    prepare("iris", PriorSpec::default(), 0)
}

fn synthetic(n: usize) -> Prepared {
    prepare(&format!("l1-ball:{n}:3:7"), PriorSpec::default(), 7)
}

fn noiseless(p: &Prepared, algo: AlgoName) -> ranknet::bench::AlgoReport {
    evaluate(p, algo, None, 0, 0).unwrap()
}

fn exhaustive_correctness() -> Outcome {
    let mut detail = Vec::new();
    for (name, p, full) in [
        ("l4", l4(), true),
        ("iris", iris(), false),
        ("l1-ball-1000", synthetic(1000), false),
    ] {
        let mut algos = vec![
            AlgoName::Ranknet,
            AlgoName::Tree,
            AlgoName::Fgbs,
            AlgoName::Sgbs,
        ];
        if full {
            algos.push(AlgoName::Gbs);
        }
        for a in algos {
            let r = noiseless(&p, a);
            let wrong = r.targets.iter().filter(|t| !t.correct).count();
            if wrong > 0 || r.targets.len() != p.prior.support().count() {
                return Err(format!(
                    "{name}/{a}: {wrong} of {} targets missed",
                    r.targets.len()
                ));
            }
        }
        detail.push(format!("{name} ok"));
    }
    Ok(detail.join(", "))
}

fn per_target_bound() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [l4(), iris()] {
        let c = p.stats().doubling_constant;
        for a in [AlgoName::Ranknet, AlgoName::Tree] {
            for t in noiseless(&p, a).targets {
                let depth = (1.0 / p.prior.mass(t.target)).log2().ceil();
                let bound = 4.0 * c.powi(6) * (depth + 1.0);
                if t.queries as f64 > bound {
                    return Err(format!(
                        "{}/{a}: target {} used {} > {bound}",
                        p.dataset.name(),
                        t.target,
                        t.queries
                    ));
                }
                worst = worst.max(t.queries as f64 / bound);
            }
        }
    }
    Ok(format!("max queries/bound = {worst:.2e}"))
}

fn net_bounds() -> Outcome {
    let mut deep_violations = 0;
    let mut nets = 0;
    for p in [l4(), iris(), synthetic(1000)] {
        let c = p.stats().doubling_constant;
        for node in p.tree().nodes() {
            nets += 1;
            let check = node.check_bounds(c);
            if node.level == 1 && !check.all_ok() {
                return Err(format!(
                    "{} root net violates a bound: {check:?}",
                    p.dataset.name()
                ));
            }
            if !check.all_ok() {
                deep_violations += 1;
            }
        }
    }
    Ok(format!(
        "{nets} nets, roots ok, {deep_violations} deeper nets outside the bounds (report only)"
    ))
}

fn gbs_within_bound() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let inst = common::random_instance(1_000 + seed, 7);
        let table = RankTable::build(&inst.dataset, inst.metric, &inst.prior).unwrap();
        let opt = exact_opt(&table, 7).unwrap();
        let cost = gbs::expected_queries(&table, &policy_outcomes(&table, &PairSet::All).unwrap());
        let bound = opt * (inst.prior.hmax() + 1.0);
        if cost > bound + 1e-9 {
            return Err(format!("instance {seed}: gbs {cost} > {bound}"));
        }
        if opt > 0.0 {
            worst = worst.max(cost / bound);
        }
    }
    Ok(format!("50 instances, max gbs/bound = {worst:.3}"))
}

fn iris_query_complexity() -> Outcome {
    let p = iris();
    let fgbs = noiseless(&p, AlgoName::Fgbs).expected_queries;
    let ranknet = noiseless(&p, AlgoName::Ranknet).expected_queries;
    let ratio = ranknet / fgbs;
    let msg = format!("f-gbs {fgbs:.3}, ranknet {ranknet:.3}, ratio {ratio:.3}");
    if fgbs <= 15.0 && (1.0..=15.0).contains(&ratio) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn iris_cost_ordering() -> Outcome {
    let p = iris();
    let cost = |a| noiseless(&p, a).expected_cost;
    let (tree, ranknet, sgbs, fgbs) = (
        cost(AlgoName::Tree),
        cost(AlgoName::Ranknet),
        cost(AlgoName::Sgbs),
        cost(AlgoName::Fgbs),
    );
    let msg = format!(
        "tree {tree:.1} < ranknet {ranknet:.1} < s-gbs {sgbs:.1} < f-gbs {fgbs:.1}, f-gbs/tree {:.1}",
        fgbs / tree
    );
    if tree < ranknet && ranknet < sgbs && sgbs < fgbs && fgbs / tree >= 10.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn noisy_robustness() -> Outcome {
    let p = synthetic(500);
    let mut parts = Vec::new();
    let mut ok = true;
    for eps in [0.1, 0.25] {
        let noise = NoiseParams::new(eps, 0.1).unwrap();
        let r = evaluate(&p, AlgoName::Noisy, Some(noise), 200, 11).unwrap();
        ok &= r.success_rate >= 0.9;
        parts.push(format!(
            "eps {eps}: success {:.3}, {:.0} queries/search",
            r.success_rate, r.expected_queries
        ));
    }
    if ok {
        Ok(parts.join("; "))
    } else {
        Err(parts.join("; "))
    }
}

fn scaling() -> Outcome {
    let points: Vec<(f64, f64)> = [125, 250, 500, 1000]
        .into_iter()
        .map(|n| {
            (
                (n as f64).log2(),
                noiseless(&synthetic(n), AlgoName::Ranknet).expected_queries,
            )
        })
        .collect();
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);
    let series: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{:.0}:{y:.2}", x.exp2()))
        .collect();
    let msg = format!("{} slope {slope:.3} R² {r2:.3}", series.join(" "));
    if r2 >= 0.8 && slope > 0.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn equivalence() -> Outcome {
    let mut checks = 0u64;
    for seed in 0..100 {
        let inst = common::random_instance(seed, 30);
        let table = RankTable::build(&inst.dataset, inst.metric, &inst.prior).unwrap();
        let n = inst.n();
        let all: Vec<usize> = (0..n).collect();
        for z in 0..n {
            for x in 0..n {
                for y in 0..n {
                    if table.answer(z, x, y).sign() != common::answer(&inst, z, x, y) {
                        return Err(format!("instance {seed}: answer({z}, {x}, {y})"));
                    }
                    checks += 1;
                }
            }
        }
        let half: Vec<usize> = all.iter().copied().filter(|z| z % 2 == 0).collect();
        for domain in [&all, &half] {
            for rho in [1.0, 0.5, 0.25, 0.125, 0.03125] {
                for &y in domain.iter() {
                    let got = radius_rank(&table, domain, y, rho).class_index;
                    if got != common::radius_rank(&inst, domain, y, rho) {
                        return Err(format!("instance {seed}: radius_rank(y={y}, rho={rho})"));
                    }
                    checks += 1;
                }
            }
            for x in 0..n {
                for y in 0..n {
                    if gbs::gbs_objective(&table, domain, x, y)
                        != common::gbs_objective(&inst, domain, x, y)
                    {
                        return Err(format!("instance {seed}: gbs_objective({x}, {y})"));
                    }
                    checks += 1;
                }
            }
        }
        let c = doubling_constant(&inst.dataset, inst.metric, &inst.prior);
        let brute = common::doubling_constant(&inst);
        if !common::rel_close(c, brute, 1e-12) {
            return Err(format!("instance {seed}: doubling constant {c} vs {brute}"));
        }
        checks += 1;
    }
    Ok(format!("{checks} comparisons on 100 instances"))
}

fn determinism() -> Outcome {
    let mut config = ExperimentConfig::new(
        DatasetSpec::Builtin {
            name: "iris".into(),
        },
        vec![
            AlgoName::Ranknet,
            AlgoName::Tree,
            AlgoName::Gbs,
            AlgoName::Fgbs,
            AlgoName::Sgbs,
        ],
    );
    config.seed = 5;
    let a = run_bench(&config).unwrap().to_json();
    let b = run_bench(&config).unwrap().to_json();
    if a != b {
        return Err("iris reports differ".into());
    }
    let mut searches = 0;
    for p in [l4(), iris()] {
        let ctx = &p.context;
        for t in p.prior.support() {
            let online = rank_net_search(ctx, &mut ExactOracle::new(&ctx.table, t)).unwrap();
            let tree = tree_search(ctx, &mut ExactOracle::new(&ctx.table, t)).unwrap();
            let again = rank_net_search(ctx, &mut ExactOracle::new(&ctx.table, t)).unwrap();
            if online.log != tree.log || online.log != again.log {
                return Err(format!(
                    "{}: query sequences differ for target {t}",
                    p.dataset.name()
                ));
            }
            searches += 1;
        }
    }
    Ok(format!(
        "{} report bytes identical, {searches} target sequences identical",
        a.len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("exhaustive noiseless correctness", exhaustive_correctness),
        ("per-target query bound", per_target_bound),
        ("net size, ball mass and rho bounds", net_bounds),
        ("gbs within OPT·(Hmax + 1)", gbs_within_bound),
        ("iris query complexity", iris_query_complexity),
        ("iris computational cost ordering", iris_cost_ordering),
        ("noisy search success rate", noisy_robustness),
        ("ranknet queries linear in log n", scaling),
        ("equivalence with brute force", equivalence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail} [{secs:.1}s]", i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
