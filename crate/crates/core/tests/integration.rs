mod common;

use ranknet::bench::{
    evaluate, run_bench, AlgoName, DatasetSpec, ExperimentConfig, Prepared, Report,
};
use ranknet::oracle::NoisyOracle;
use ranknet::search::{drive, parse_transcript, replay, Algorithm, NoiseParams};
use ranknet::{
    load_csv, Dataset, Error, ExactOracle, GbsVariant, Metric, Prior, PriorSpec, RankNetTree,
    RankTable, SearchContext, Session,
};

/// Grid points where massless items used to keep a ball above half the
/// mass for every ρ.
fn massless_neighbours() -> (Dataset, Prior) {
    let rows = [
        [1, 2],
        [2, 0],
        [3, 1],
        [1, 3],
        [0, 0],
        [1, 0],
        [2, 1],
        [0, 0],
        [2, 0],
        [2, 1],
    ];
    let ds = Dataset::new(
        "grid",
        rows.iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect(),
    )
    .unwrap();
    let prior = Prior::from_weights(vec![
        0.193, 0.258, 0.0, 0.199, 0.0, 0.0, 0.091, 0.0, 0.137, 0.122,
    ])
    .unwrap();
    (ds, prior)
}

#[test]
fn massless_items_do_not_block_construction() {
    let (ds, prior) = massless_neighbours();
    let table = RankTable::build(&ds, Metric::Manhattan, &prior).unwrap();
    let tree = RankNetTree::build(&table).unwrap();
    assert!(!tree.root().domain.contains(&2));
    let ctx = SearchContext::from_parts(table, tree);
    for t in prior.support() {
        for alg in [
            Algorithm::RankNet,
            Algorithm::Tree,
            Algorithm::Gbs {
                variant: GbsVariant::Sparse,
            },
        ] {
            let mut s = Session::new(&ctx, alg).unwrap();
            let out = drive(&mut s, &mut ExactOracle::new(&ctx.table, t)).unwrap();
            assert!(ctx.table.indistinguishable(out.result, t));
        }
    }
}

#[test]
fn table_and_tree_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, prior) = massless_neighbours();
    let table = RankTable::build(&ds, Metric::Manhattan, &prior).unwrap();
    let tree = RankNetTree::build(&table).unwrap();
    table.save(dir.path().join("t.json")).unwrap();
    tree.save(dir.path().join("tree.json")).unwrap();
    assert_eq!(
        RankTable::load(dir.path().join("t.json"), &prior).unwrap(),
        table
    );
    assert_eq!(
        RankNetTree::load(dir.path().join("tree.json")).unwrap(),
        tree
    );
    assert!(matches!(
        RankTable::load(dir.path().join("missing.json"), &prior),
        Err(Error::Io { .. })
    ));
}

#[test]
fn csv_datasets_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let ds = ranknet::gen_l1_ball(40, 3, 1.0, 9).unwrap();
    ds.write_csv(&path).unwrap();
    let back = load_csv(&path).unwrap();
    assert_eq!((back.len(), back.dim()), (40, 3));
    for i in 0..40 {
        assert_eq!(back.item(i), ds.item(i));
    }
    let spec: DatasetSpec = path.to_str().unwrap().parse().unwrap();
    assert_eq!(spec.load().unwrap().len(), 40);
}

#[test]
fn reports_round_trip_and_repeat() {
    let mut config = ExperimentConfig::new(
        "l1-ball:120:2:3".parse().unwrap(),
        vec![
            AlgoName::Ranknet,
            AlgoName::Tree,
            AlgoName::Fgbs,
            AlgoName::Sgbs,
            AlgoName::Noisy,
        ],
    );
    config.noise = Some(NoiseParams::new(0.2, 0.1).unwrap());
    config.trials = Some(20);
    config.seed = 3;
    let a = run_bench(&config).unwrap();
    let json = a.to_json();
    let back: Report = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
    assert_eq!(run_bench(&config).unwrap().to_json(), json);
    let noisy = a.algorithm(AlgoName::Noisy).unwrap();
    assert_eq!(noisy.targets.len(), 20);
    assert!(noisy.queries_stderr.is_some());
    let cfg_json = serde_json::to_string(&config).unwrap();
    assert_eq!(
        serde_json::from_str::<ExperimentConfig>(&cfg_json).unwrap(),
        config
    );
}

#[test]
fn report_depends_on_seed_only_through_prior() {
    let mut config = ExperimentConfig::new(
        DatasetSpec::Builtin {
            name: "iris".into(),
        },
        vec![AlgoName::Tree],
    );
    let a = run_bench(&config).unwrap();
    config.seed = 1;
    let b = run_bench(&config).unwrap();
    assert_ne!(a.algorithm(AlgoName::Tree), b.algorithm(AlgoName::Tree));
    config.prior = PriorSpec::Uniform;
    let u0 = run_bench(&config).unwrap();
    config.seed = 2;
    let u1 = run_bench(&config).unwrap();
    assert_eq!(u0.algorithms, u1.algorithms);
}

#[test]
fn noisy_transcripts_replay() {
    let p = Prepared::from_spec(
        &"iris".parse().unwrap(),
        &PriorSpec::default(),
        Metric::Euclidean,
        0,
    )
    .unwrap();
    let alg = Algorithm::Noisy(NoiseParams::new(0.2, 0.1).unwrap());
    let mut s = Session::new(&p.context, alg).unwrap();
    let mut o = NoisyOracle::new(ExactOracle::new(p.table(), 17), 0.2, 4).unwrap();
    drive(&mut s, &mut o).unwrap();
    let text = s.transcript();
    let back = replay(&p.context, alg, &parse_transcript(&text).unwrap()).unwrap();
    assert_eq!(back.transcript(), text);
    assert!(replay(
        &p.context,
        Algorithm::Tree,
        &parse_transcript(&text).unwrap()
    )
    .is_err());
}

#[test]
fn gbs_sessions_stay_consistent_on_iris() {
    let p = Prepared::from_spec(
        &"iris".parse().unwrap(),
        &PriorSpec::default(),
        Metric::Euclidean,
        0,
    )
    .unwrap();
    let report = evaluate(&p, AlgoName::Sgbs, None, 0, 0).unwrap();
    for t in report.targets.iter().step_by(10) {
        let out = ranknet::search::gbs_search(
            &p.context,
            &mut ExactOracle::new(p.table(), t.target),
            GbsVariant::Sparse,
        )
        .unwrap();
        assert_eq!((out.result, out.queries as u64), (t.result, t.queries));
    }
}

#[test]
fn noisy_cost_tracks_target_depth() {
    let p = Prepared::from_spec(
        &"l1-ball:500:3:7".parse().unwrap(),
        &PriorSpec::default(),
        Metric::Euclidean,
        7,
    )
    .unwrap();
    let r = evaluate(
        &p,
        AlgoName::Noisy,
        Some(NoiseParams::new(0.1, 0.1).unwrap()),
        300,
        2,
    )
    .unwrap();
    let xs: Vec<f64> = r
        .targets
        .iter()
        .map(|t| (1.0 / p.prior.mass(t.target)).log2().ceil())
        .collect();
    let ys: Vec<f64> = r.targets.iter().map(|t| t.queries as f64).collect();
    let corr = pearson(&xs, &ys);
    assert!(corr > 0.0, "correlation {corr}");
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn single_item_dataset() {
    let p = Prepared::new(
        Dataset::from_line("one", &[4.0]).unwrap(),
        Metric::Euclidean,
        Prior::uniform(1).unwrap(),
    )
    .unwrap();
    for a in [
        AlgoName::Ranknet,
        AlgoName::Tree,
        AlgoName::Gbs,
        AlgoName::Fgbs,
        AlgoName::Sgbs,
    ] {
        let r = evaluate(&p, a, None, 0, 0).unwrap();
        assert_eq!(r.expected_queries, 0.0);
        assert_eq!(r.success_rate, 1.0);
    }
    assert_eq!(p.stats().doubling_constant, 1.0);
}
